#pragma once

// Patient -> exam -> image hierarchy with an integrity-checked index and
// patient-disjoint splitting.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "oculomix/error.hpp"
#include "oculomix/rng.hpp"

namespace oculomix {

/// Row-major single-channel intensity grid.
struct PixelGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  PixelGrid() = default;
  PixelGrid(std::size_t h, std::size_t w, double fill = 0.0)
      : height(h), width(w), values(h * w, fill) {}

  std::size_t size() const noexcept { return values.size(); }
  double& at(std::size_t row, std::size_t col) { return values[row * width + col]; }
  double at(std::size_t row, std::size_t col) const { return values[row * width + col]; }
  bool same_shape(const PixelGrid& other) const noexcept {
    return height == other.height && width == other.width;
  }

  friend bool operator==(const PixelGrid&, const PixelGrid&) = default;
};

enum class View { macula, disc };
enum class Laterality { left, right };

struct ImageRecord {
  std::string image_id;
  std::string exam_id;
  std::string patient_id;
  PixelGrid pixels;
  View view = View::macula;
  Laterality laterality = Laterality::left;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct Exam {
  std::string exam_id;
  std::string patient_id;
  int time_point = 0;  // months since the patient's baseline
  int label = 0;
  double event_time = 1.0;  // months from this exam to event or censoring
  bool event_observed = false;

  friend bool operator==(const Exam&, const Exam&) = default;
};

struct Patient {
  std::string patient_id;
  std::vector<std::size_t> exams;  // positions in CohortIndex::exams(), ascending time_point

  friend bool operator==(const Patient&, const Patient&) = default;
};

/// Immutable, validated hierarchy. Construct through build_index().
class CohortIndex {
 public:
  CohortIndex() = default;

  std::span<const Patient> patients() const noexcept { return patients_; }
  std::span<const Exam> exams() const noexcept { return exams_; }
  std::span<const ImageRecord> images() const noexcept { return images_; }

  std::size_t patient_count() const noexcept { return patients_.size(); }
  std::size_t exam_count() const noexcept { return exams_.size(); }
  std::size_t image_count() const noexcept { return images_.size(); }
  bool empty() const noexcept { return images_.empty(); }

  std::span<const std::size_t> exams_of_patient(std::size_t patient) const {
    return patients_[patient].exams;
  }
  std::span<const std::size_t> images_of_exam(std::size_t exam) const {
    return exam_images_[exam];
  }
  std::size_t exam_of_image(std::size_t image) const { return image_exam_[image]; }
  std::size_t patient_of_exam(std::size_t exam) const { return exam_patient_[exam]; }
  std::size_t patient_of_image(std::size_t image) const {
    return exam_patient_[image_exam_[image]];
  }
  int label_of_image(std::size_t image) const { return exams_[image_exam_[image]].label; }
  int time_of_image(std::size_t image) const { return exams_[image_exam_[image]].time_point; }

  friend bool operator==(const CohortIndex& a, const CohortIndex& b) {
    return a.patients_ == b.patients_ && a.exams_ == b.exams_ && a.images_ == b.images_;
  }

  friend CohortIndex build_index(std::vector<ImageRecord> records, std::vector<Exam> exams);

 private:
  std::vector<Patient> patients_;
  std::vector<Exam> exams_;
  std::vector<ImageRecord> images_;
  std::vector<std::vector<std::size_t>> exam_images_;
  std::vector<std::size_t> image_exam_;
  std::vector<std::size_t> exam_patient_;
};

namespace detail {

inline void validate_pixels(const ImageRecord& record) {
  const auto& px = record.pixels;
  if (px.height < 8 || px.width < 8 || px.values.size() != px.height * px.width) {
    throw Error(ErrorKind::InvalidRecord, "image " + record.image_id + " must be at least 8x8");
  }
  for (double v : px.values) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(ErrorKind::InvalidRecord, "image " + record.image_id + " has pixel outside [0,1]");
    }
  }
}

}  // namespace detail

/// Validates the hierarchy and derives patients from the exams. Patients are
/// ordered by first appearance in `exams`; exams and images keep input order.
inline CohortIndex build_index(std::vector<ImageRecord> records, std::vector<Exam> exams) {
  CohortIndex index;

  std::unordered_map<std::string, std::size_t> exam_pos;
  std::unordered_map<std::string, std::size_t> patient_pos;
  exam_pos.reserve(exams.size());
  for (std::size_t e = 0; e < exams.size(); ++e) {
    const Exam& exam = exams[e];
    if (!exam_pos.emplace(exam.exam_id, e).second) {
      throw Error(ErrorKind::DuplicateId, "exam_id " + exam.exam_id);
    }
    if (exam.time_point < 0) {
      throw Error(ErrorKind::InvalidRecord, "exam " + exam.exam_id + " has negative time_point");
    }
    if (exam.label != 0 && exam.label != 1) {
      throw Error(ErrorKind::InvalidRecord, "exam " + exam.exam_id + " label must be 0 or 1");
    }
    if (!(exam.event_time > 0.0) || !std::isfinite(exam.event_time)) {
      throw Error(ErrorKind::InvalidRecord, "exam " + exam.exam_id + " event_time must be positive");
    }
    auto [it, inserted] = patient_pos.emplace(exam.patient_id, index.patients_.size());
    if (inserted) index.patients_.push_back(Patient{exam.patient_id, {}});
    index.patients_[it->second].exams.push_back(e);
    index.exam_patient_.push_back(it->second);
  }

  for (auto& patient : index.patients_) {
    std::stable_sort(patient.exams.begin(), patient.exams.end(), [&](std::size_t a, std::size_t b) {
      return exams[a].time_point < exams[b].time_point;
    });
    for (std::size_t k = 1; k < patient.exams.size(); ++k) {
      if (exams[patient.exams[k]].time_point == exams[patient.exams[k - 1]].time_point) {
        throw Error(ErrorKind::DuplicateTimePoint,
                    "patient " + patient.patient_id + " has two exams at t=" +
                        std::to_string(exams[patient.exams[k]].time_point));
      }
    }
  }

  std::unordered_set<std::string> image_ids;
  image_ids.reserve(records.size());
  index.exam_images_.assign(exams.size(), {});
  index.image_exam_.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const ImageRecord& record = records[i];
    if (!image_ids.insert(record.image_id).second) {
      throw Error(ErrorKind::DuplicateId, "image_id " + record.image_id);
    }
    auto it = exam_pos.find(record.exam_id);
    if (it == exam_pos.end()) {
      throw Error(ErrorKind::DanglingReference,
                  "image " + record.image_id + " cites unknown exam " + record.exam_id);
    }
    if (exams[it->second].patient_id != record.patient_id) {
      throw Error(ErrorKind::DanglingReference,
                  "image " + record.image_id + " cites patient " + record.patient_id +
                      " but its exam belongs to " + exams[it->second].patient_id);
    }
    detail::validate_pixels(record);
    index.exam_images_[it->second].push_back(i);
    index.image_exam_.push_back(it->second);
  }

  index.exams_ = std::move(exams);
  index.images_ = std::move(records);
  return index;
}

/// Rebuilds an index restricted to the given patients (positions into
/// `source.patients()`), preserving source record order.
inline CohortIndex subset_index(const CohortIndex& source, std::span<const std::size_t> patients) {
  std::vector<char> keep(source.patient_count(), 0);
  for (std::size_t p : patients) keep.at(p) = 1;

  std::vector<Exam> exams;
  std::vector<ImageRecord> images;
  for (std::size_t e = 0; e < source.exam_count(); ++e) {
    if (keep[source.patient_of_exam(e)]) exams.push_back(source.exams()[e]);
  }
  for (std::size_t i = 0; i < source.image_count(); ++i) {
    if (keep[source.patient_of_image(i)]) images.push_back(source.images()[i]);
  }
  return build_index(std::move(images), std::move(exams));
}

struct CohortSplits {
  CohortIndex train;
  CohortIndex validation;
  CohortIndex test;
};

/// Patient counts per split for `n` patients: floor(ratio * n) each, with the
/// rounding remainder assigned to the earliest split with a positive ratio.
inline std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& ratios) {
  double total = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0) || !std::isfinite(r)) {
      throw Error(ErrorKind::InvalidRatios, "split ratios must be non-negative");
    }
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorKind::InvalidRatios, "split ratios must sum to 1");
  }
  std::array<std::size_t, 3> sizes{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    sizes[k] = static_cast<std::size_t>(std::floor(ratios[k] * static_cast<double>(n) + 1e-9));
    assigned += sizes[k];
  }
  for (std::size_t k = 0; k < 3; ++k) {
    if (ratios[k] > 0.0) {
      sizes[k] += n - assigned;
      break;
    }
  }
  return sizes;
}

/// Patient-disjoint (train, validation, test) split over a seeded shuffle of
/// patient order.
inline CohortSplits split_cohort(const CohortIndex& index, const std::array<double, 3>& ratios,
                                 std::uint64_t seed) {
  const std::size_t n = index.patient_count();
  const auto sizes = split_sizes(n, ratios);
  if (n < 3) throw Error(ErrorKind::InvalidConfig, "split_cohort needs at least 3 patients");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, Stream::split);
  for (std::size_t k = n; k > 1; --k) {
    std::swap(order[k - 1], order[uniform_index(rng, k)]);
  }

  std::array<std::vector<std::size_t>, 3> groups;
  std::size_t cursor = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    groups[k].assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                     order.begin() + static_cast<std::ptrdiff_t>(cursor + sizes[k]));
    cursor += sizes[k];
  }
  return CohortSplits{subset_index(index, groups[0]), subset_index(index, groups[1]),
                      subset_index(index, groups[2])};
}

}  // namespace oculomix
