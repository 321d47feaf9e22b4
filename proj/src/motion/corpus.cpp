// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#include "topomo/motion/corpus.hpp"

#include <cmath>
#include <fstream>

#include "topomo/io/container.hpp"
#include "topomo/numerics/random.hpp"
#include "topomo/skeleton/skeleton_json.hpp"

namespace topomo {

namespace {

const char* split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

Split split_from_name(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw FormatError("unknown split '" + s + "'");
}

}  // namespace

std::vector<std::size_t> Corpus::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].split == split) out.push_back(i);
  return out;
}

void Corpus::validate() const {
  for (const auto& s : skeletons) s.validate();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    try {
      if (e.skeleton >= skeletons.size()) throw DataError("skeleton index out of range");
      e.motion.validate(true);
      if (e.motion.num_joints() != skeletons[e.skeleton].size()) {
        throw DataError("motion has " + std::to_string(e.motion.num_joints()) + " joints, skeleton has " +
                        std::to_string(skeletons[e.skeleton].size()));
      }
      if (e.text.summary.empty()) throw DataError("empty text summary");
    } catch (const DataError& err) {
      throw DataError("corpus entry " + std::to_string(i) + ": " + err.what());
    }
  }
}

void assign_splits(Corpus& c, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw UsageError("test fraction must lie in [0, 1)");
  Rng rng(Rng::derive(seed, 0x5b17));
  const auto order = rng.permutation(c.entries.size());
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(c.entries.size())));
  for (std::size_t k = 0; k < order.size(); ++k) c.entries[order[k]].split = k < n_test ? Split::kTest : Split::kTrain;
}

void save_corpus(const Corpus& c, const std::string& path) {
  nlohmann::json header;
  header["format"] = "topomo-corpus";
  header["entry_count"] = c.entries.size();
  header["skeletons"] = nlohmann::json::array();
  for (const auto& s : c.skeletons) header["skeletons"].push_back(skeleton_to_json_value(s));
  header["entries"] = nlohmann::json::array();
  std::vector<double> payload;
  for (const auto& e : c.entries) {
    const auto data = e.motion.frames.data();
    header["entries"].push_back({{"skeleton", e.skeleton},
                                 {"frames", e.motion.num_frames()},
                                 {"joints", e.motion.num_joints()},
                                 {"fps", e.motion.fps},
                                 {"species", e.motion.species},
                                 {"split", split_name(e.split)},
                                 {"scale_factor", e.scale_factor},
                                 {"offset", payload.size()},
                                 {"length", data.size()},
                                 {"text",
                                  {{"summary", e.text.summary},
                                   {"detail", e.text.detail},
                                   {"motion_class", e.text.motion_class},
                                   {"species", e.text.species}}}});
    payload.insert(payload.end(), data.begin(), data.end());
  }
  io::write_container(path, io::kCorpusMagic, kCorpusVersion, std::move(header), payload);
}

Corpus load_corpus(const std::string& path) {
  const io::Container box = io::read_container(path, io::kCorpusMagic, kCorpusVersion);
  Corpus c;
  try {
    const auto& h = box.header;
    for (const auto& s : h.at("skeletons")) c.skeletons.push_back(skeleton_from_json_value(s));
    const auto& entries = h.at("entries");
    if (entries.size() != h.at("entry_count").get<std::size_t>()) throw FormatError("entry count mismatch");
    for (const auto& je : entries) {
      CorpusEntry e;
      e.skeleton = je.at("skeleton").get<std::size_t>();
      const auto frames = je.at("frames").get<std::size_t>();
      const auto joints = je.at("joints").get<std::size_t>();
      const auto offset = je.at("offset").get<std::size_t>();
      const auto length = je.at("length").get<std::size_t>();
      if (length != frames * joints * kMotionFeatureWidth || offset + length > box.payload.size() || length == 0) {
        throw FormatError("entry payload range is inconsistent");
      }
      e.motion.frames = Tensor({frames, joints, kMotionFeatureWidth},
                               std::vector<double>(box.payload.begin() + static_cast<std::ptrdiff_t>(offset),
                                                   box.payload.begin() + static_cast<std::ptrdiff_t>(offset + length)));
      e.motion.fps = je.at("fps").get<double>();
      e.motion.species = je.at("species").get<std::string>();
      e.split = split_from_name(je.at("split").get<std::string>());
      e.scale_factor = je.at("scale_factor").get<double>();
      const auto& t = je.at("text");
      e.text = {t.at("summary").get<std::string>(), t.at("detail").get<std::string>(),
                t.at("motion_class").get<std::string>(), t.at("species").get<std::string>()};
      c.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("corpus header: " + std::string(e.what()));
  }
  c.validate();
  return c;
}

void export_text_jsonl(const Corpus& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (std::size_t i = 0; i < c.entries.size(); ++i) {
    const auto& e = c.entries[i];
    out << nlohmann::json{{"index", i},
                          {"split", split_name(e.split)},
                          {"species", e.text.species},
                          {"motion_class", e.text.motion_class},
                          {"summary", e.text.summary},
                          {"detail", e.text.detail}}
               .dump()
        << '\n';
  }
}

std::string prompt_text(const TextRecord& t, bool with_summary) {
  if (!with_summary || t.summary.empty()) return t.detail.empty() ? t.summary : t.detail;
  return t.summary + ". " + t.detail;
}

}  // namespace topomo
