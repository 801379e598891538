#pragma once

// On-disk cohort format: a JSON document with "patients", "exams" and
// "images" arrays, plus a sidecar of little-endian float64 pixels in
// row-major order. Each image records its byte offset into the sidecar.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <json.hpp>

#include "oculomix/cohort.hpp"
#include "oculomix/error.hpp"

namespace oculomix {

using Json = nlohmann::json;

inline std::string to_string(View v) { return v == View::macula ? "macula" : "disc"; }
inline std::string to_string(Laterality l) { return l == Laterality::left ? "left" : "right"; }

inline View parse_view(const std::string& s) {
  if (s == "macula") return View::macula;
  if (s == "disc") return View::disc;
  throw Error(ErrorKind::Parse, "unknown view '" + s + "'");
}

inline Laterality parse_laterality(const std::string& s) {
  if (s == "left") return Laterality::left;
  if (s == "right") return Laterality::right;
  throw Error(ErrorKind::Parse, "unknown laterality '" + s + "'");
}

namespace detail {

inline void append_le_f64(std::vector<unsigned char>& out, double value) {
  const auto bits = std::bit_cast<std::uint64_t>(value);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>(bits >> (8 * b)));
}

inline double read_le_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace detail

inline std::filesystem::path pixel_sidecar_path(const std::filesystem::path& json_path) {
  auto sidecar = json_path;
  sidecar.replace_extension(".pixels.bin");
  return sidecar;
}

struct SerializedCohort {
  Json document;
  std::vector<unsigned char> pixels;
};

inline SerializedCohort serialize_cohort(const CohortIndex& index, const std::string& pixel_file) {
  SerializedCohort out;
  Json patients = Json::array();
  for (const Patient& p : index.patients()) {
    Json exam_ids = Json::array();
    for (std::size_t e : p.exams) exam_ids.push_back(index.exams()[e].exam_id);
    patients.push_back({{"patient_id", p.patient_id}, {"exam_ids", exam_ids}});
  }
  Json exams = Json::array();
  for (const Exam& e : index.exams()) {
    exams.push_back({{"exam_id", e.exam_id},
                     {"patient_id", e.patient_id},
                     {"time_point", e.time_point},
                     {"label", e.label},
                     {"event_time", e.event_time},
                     {"event_observed", e.event_observed}});
  }
  Json images = Json::array();
  out.pixels.reserve(index.image_count() * 32 * 32 * 8);
  for (const ImageRecord& r : index.images()) {
    images.push_back({{"image_id", r.image_id},
                      {"exam_id", r.exam_id},
                      {"patient_id", r.patient_id},
                      {"view", to_string(r.view)},
                      {"laterality", to_string(r.laterality)},
                      {"height", r.pixels.height},
                      {"width", r.pixels.width},
                      {"pixel_offset", out.pixels.size()}});
    for (double v : r.pixels.values) detail::append_le_f64(out.pixels, v);
  }
  out.document = {{"format", "oculomix-cohort"},
                  {"version", 1},
                  {"pixel_file", pixel_file},
                  {"patients", std::move(patients)},
                  {"exams", std::move(exams)},
                  {"images", std::move(images)}};
  return out;
}

inline CohortIndex deserialize_cohort(const Json& doc, std::span<const unsigned char> pixels) {
  std::vector<Exam> exams;
  std::vector<ImageRecord> images;
  try {
    for (const Json& e : doc.at("exams")) {
      exams.push_back(Exam{e.at("exam_id").get<std::string>(), e.at("patient_id").get<std::string>(),
                           e.at("time_point").get<int>(), e.at("label").get<int>(),
                           e.at("event_time").get<double>(), e.at("event_observed").get<bool>()});
    }
    for (const Json& j : doc.at("images")) {
      ImageRecord r;
      r.image_id = j.at("image_id").get<std::string>();
      r.exam_id = j.at("exam_id").get<std::string>();
      r.patient_id = j.at("patient_id").get<std::string>();
      r.view = parse_view(j.at("view").get<std::string>());
      r.laterality = parse_laterality(j.at("laterality").get<std::string>());
      const auto h = j.at("height").get<std::size_t>();
      const auto w = j.at("width").get<std::size_t>();
      const auto offset = j.at("pixel_offset").get<std::size_t>();
      if (offset + h * w * 8 > pixels.size()) {
        throw Error(ErrorKind::Parse, "pixel range of " + r.image_id + " exceeds sidecar");
      }
      r.pixels = PixelGrid(h, w);
      for (std::size_t k = 0; k < h * w; ++k) r.pixels.values[k] = detail::read_le_f64(&pixels[offset + 8 * k]);
      images.push_back(std::move(r));
    }
  } catch (const Json::exception& ex) {
    throw Error(ErrorKind::Parse, ex.what());
  }
  CohortIndex index = build_index(std::move(images), std::move(exams));

  // The patients array is redundant with the exams; reject files where they disagree.
  if (doc.contains("patients")) {
    const Json& patients = doc.at("patients");
    if (patients.size() != index.patient_count()) {
      throw Error(ErrorKind::DanglingReference, "patients array disagrees with exams");
    }
    for (std::size_t p = 0; p < patients.size(); ++p) {
      const Patient& derived = index.patients()[p];
      const Json& listed = patients[p];
      if (listed.at("patient_id").get<std::string>() != derived.patient_id ||
          listed.at("exam_ids").size() != derived.exams.size()) {
        throw Error(ErrorKind::DanglingReference, "patient " + derived.patient_id + " disagrees with exams");
      }
    }
  }
  return index;
}

/// Writes `<path>` and its pixel sidecar `<stem>.pixels.bin` next to it.
inline void save_cohort(const CohortIndex& index, const std::filesystem::path& json_path) {
  const auto sidecar = pixel_sidecar_path(json_path);
  if (json_path.has_parent_path()) std::filesystem::create_directories(json_path.parent_path());
  const SerializedCohort s = serialize_cohort(index, sidecar.filename().string());
  const std::string text = s.document.dump(1);
  detail::write_file_bytes(json_path, text.data(), text.size());
  detail::write_file_bytes(sidecar, s.pixels.data(), s.pixels.size());
}

inline CohortIndex load_cohort(const std::filesystem::path& json_path) {
  const auto bytes = detail::read_file_bytes(json_path);
  Json doc;
  try {
    doc = Json::parse(bytes.begin(), bytes.end());
  } catch (const Json::exception& ex) {
    throw Error(ErrorKind::Parse, json_path.string() + ": " + ex.what());
  }
  std::filesystem::path sidecar = pixel_sidecar_path(json_path);
  if (doc.contains("pixel_file")) sidecar = json_path.parent_path() / doc.at("pixel_file").get<std::string>();
  const auto pixels = detail::read_file_bytes(sidecar);
  return deserialize_cohort(doc, pixels);
}

}  // namespace oculomix
