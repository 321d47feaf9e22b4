// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

#include "topomo/skeleton/bvh.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace topomo {

namespace {

struct Token {
  std::string text;
  std::size_t line;
};

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::optional<double> to_double(std::string_view s) {
  double v = 0.0;
  const char* first = s.data();
  if (!s.empty() && s.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<Channel> parse_channel(std::string_view s) {
  static const std::map<std::string_view, Channel, std::less<>> kNames{
      {"Xposition", Channel::kXposition}, {"Yposition", Channel::kYposition}, {"Zposition", Channel::kZposition},
      {"Xrotation", Channel::kXrotation}, {"Yrotation", Channel::kYrotation}, {"Zrotation", Channel::kZrotation}};
  const auto it = kNames.find(s);
  if (it == kNames.end()) return std::nullopt;
  return it->second;
}

bool is_rotation(Channel c) { return c >= Channel::kXrotation; }
int channel_axis(Channel c) { return static_cast<int>(c) % 3; }

class HierarchyParser {
 public:
  HierarchyParser(std::vector<Token> tokens, std::size_t eof_line) : toks_(std::move(tokens)), eof_line_(eof_line) {}

  void parse(BvhClip& clip) {
    const Token& head = next("HIERARCHY");
    if (head.text != "HIERARCHY") throw ParseError(head.line, "missing HIERARCHY section");
    const Token& root = next("ROOT");
    if (root.text != "ROOT") throw ParseError(root.line, "expected ROOT, found '" + root.text + "'");
    const Token& name = next("root name");
    joint_body(clip, name, kRootParent, false);
    if (pos_ < toks_.size()) {
      const Token& t = toks_[pos_];
      if (t.text == "}") throw ParseError(t.line, "unbalanced braces: unexpected '}'");
      if (t.text == "ROOT") throw ParseError(t.line, "multiple ROOT joints are not supported");
      throw ParseError(t.line, "unexpected token '" + t.text + "' after hierarchy");
    }
  }

 private:
  const Token& next(const std::string& what) {
    if (pos_ >= toks_.size()) {
      throw ParseError(eof_line_, "unexpected end of hierarchy while reading " + what + " (unbalanced braces?)");
    }
    return toks_[pos_++];
  }

  double number(const std::string& what) {
    const Token& t = next(what);
    const auto v = to_double(t.text);
    if (!v) throw ParseError(t.line, "expected a number for " + what + ", found '" + t.text + "'");
    return *v;
  }

  std::string unique_name(const std::string& base) {
    std::string name = base;
    for (int k = 2; names_.count(name) != 0; ++k) name = base + std::to_string(k);
    return name;
  }

  void joint_body(BvhClip& clip, const Token& name_tok, int parent, bool end_site) {
    std::string name = end_site ? unique_name(clip.skeleton.joints[static_cast<std::size_t>(parent)].name + "_End")
                                : name_tok.text;
    if (!end_site && names_.count(name) != 0) throw ParseError(name_tok.line, "duplicate joint name '" + name + "'");
    names_.insert(name);
    const int index = static_cast<int>(clip.skeleton.joints.size());
    clip.skeleton.joints.push_back(Joint{name, parent, {0, 0, 0}});
    clip.layout.channels.emplace_back();
    clip.layout.end_site.push_back(end_site ? 1 : 0);

    const Token& open = next("'{'");
    if (open.text != "{") throw ParseError(open.line, "expected '{' after joint '" + name + "'");
    bool have_offset = false, have_channels = false;
    while (true) {
      const Token& t = next("joint '" + name + "'");
      if (t.text == "}") break;
      if (t.text == "MOTION") throw ParseError(t.line, "unbalanced braces: joint '" + name + "' is not closed");
      if (t.text == "OFFSET") {
        auto& off = clip.skeleton.joints[static_cast<std::size_t>(index)].offset;
        for (auto& v : off) v = number("OFFSET");
        have_offset = true;
      } else if (t.text == "CHANNELS") {
        if (end_site) throw ParseError(t.line, "End Site may not declare CHANNELS");
        const Token& count_tok = next("channel count");
        const auto count = to_double(count_tok.text);
        if (!count || (*count != 3.0 && *count != 6.0)) {
          throw ParseError(count_tok.line, "CHANNELS count must be 3 or 6, found '" + count_tok.text + "'");
        }
        auto& chans = clip.layout.channels[static_cast<std::size_t>(index)];
        std::set<Channel> seen;
        for (int c = 0; c < static_cast<int>(*count); ++c) {
          const Token& ct = next("channel name");
          const auto ch = parse_channel(ct.text);
          if (!ch) {
            throw ParseError(ct.line, "joint '" + name + "' declares " + std::to_string(static_cast<int>(*count)) +
                                          " channels but '" + ct.text + "' is not a channel name");
          }
          if (!seen.insert(*ch).second) throw ParseError(ct.line, "duplicate channel '" + ct.text + "'");
          chans.push_back(*ch);
        }
        const auto rot = std::count_if(chans.begin(), chans.end(), is_rotation);
        if (rot != 0 && rot != 3) throw ParseError(count_tok.line, "joint '" + name + "' needs 0 or 3 rotation channels");
        if (chans.size() - static_cast<std::size_t>(rot) != 0 && chans.size() - static_cast<std::size_t>(rot) != 3) {
          throw ParseError(count_tok.line, "joint '" + name + "' needs 0 or 3 position channels");
        }
        have_channels = true;
      } else if (t.text == "JOINT") {
        if (end_site) throw ParseError(t.line, "End Site may not contain joints");
        joint_body(clip, next("joint name"), index, false);
      } else if (t.text == "End") {
        if (end_site) throw ParseError(t.line, "End Site may not contain joints");
        const Token& site = next("'Site'");
        if (site.text != "Site") throw ParseError(site.line, "expected 'Site' after 'End'");
        joint_body(clip, site, index, true);
      } else {
        throw ParseError(t.line, "unexpected token '" + t.text + "' in joint '" + name + "'");
      }
    }
    if (!have_offset) throw ParseError(name_tok.line, "joint '" + name + "' has no OFFSET");
    if (!end_site && !have_channels) throw ParseError(name_tok.line, "joint '" + name + "' has no CHANNELS");
  }

  std::vector<Token> toks_;
  std::size_t eof_line_;
  std::size_t pos_ = 0;
  std::set<std::string> names_;
};

void append_number(std::string& out, double v) {
  v += 0.0;  // no "-0"
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace

std::string_view channel_name(Channel c) {
  static constexpr std::array<std::string_view, 6> kNames{"Xposition", "Yposition", "Zposition",
                                                          "Xrotation", "Yrotation", "Zrotation"};
  return kNames[static_cast<std::size_t>(c)];
}

std::size_t BvhLayout::width() const {
  std::size_t w = 0;
  for (const auto& c : channels) w += c.size();
  return w;
}

BvhLayout BvhLayout::standard(const SkeletonGraph& s) {
  BvhLayout layout;
  const auto kids = s.children();
  for (std::size_t j = 0; j < s.size(); ++j) {
    const bool leaf_site = j > 0 && kids[j].empty() &&
                           s.joints[j].name == s.joints[static_cast<std::size_t>(s.joints[j].parent)].name + "_End";
    layout.end_site.push_back(leaf_site ? 1 : 0);
    if (leaf_site) {
      layout.channels.emplace_back();
    } else if (j == 0) {
      layout.channels.push_back({Channel::kXposition, Channel::kYposition, Channel::kZposition, Channel::kZrotation,
                                 Channel::kXrotation, Channel::kYrotation});
    } else {
      layout.channels.push_back({Channel::kZrotation, Channel::kXrotation, Channel::kYrotation});
    }
  }
  return layout;
}

BvhClip parse_bvh(std::string_view text) {
  const auto lines = split_lines(text);
  std::vector<Token> tokens;
  std::size_t motion_line = 0;  // 1-based; 0 = absent
  for (std::size_t i = 0; i < lines.size() && motion_line == 0; ++i) {
    for (auto tok : split_ws(lines[i])) {
      // Braces may be glued to neighbouring words.
      std::size_t start = 0;
      for (std::size_t k = 0; k <= tok.size(); ++k) {
        if (k == tok.size() || tok[k] == '{' || tok[k] == '}') {
          if (k > start) tokens.push_back({std::string(tok.substr(start, k - start)), i + 1});
          if (k < tok.size()) tokens.push_back({std::string(1, tok[k]), i + 1});
          start = k + 1;
        }
      }
      if (!tokens.empty() && tokens.back().text == "MOTION") {
        motion_line = i + 1;
        break;
      }
    }
  }
  if (tokens.empty() || tokens.front().text != "HIERARCHY") {
    throw ParseError(tokens.empty() ? 1 : tokens.front().line, "missing HIERARCHY section");
  }
  BvhClip clip;
  if (motion_line != 0) tokens.pop_back();
  HierarchyParser(tokens, motion_line != 0 ? motion_line : lines.size()).parse(clip);
  if (motion_line == 0) throw ParseError(lines.size(), "missing MOTION section");
  clip.skeleton.name = clip.skeleton.joints.front().name;

  // MOTION: "Frames: N", "Frame Time: f", then one row per frame.
  std::size_t li = motion_line;
  auto next_content = [&]() -> std::size_t {
    while (li < lines.size() && split_ws(lines[li]).empty()) ++li;
    return li;
  };
  const std::size_t width = clip.layout.width();
  next_content();
  if (li >= lines.size()) throw ParseError(lines.size(), "MOTION section lacks 'Frames:'");
  auto words = split_ws(lines[li]);
  if (words.size() != 2 || words[0] != "Frames:") throw ParseError(li + 1, "expected 'Frames: <count>'");
  const auto frame_count = to_double(words[1]);
  if (!frame_count || *frame_count < 0 || *frame_count != static_cast<double>(static_cast<std::size_t>(*frame_count))) {
    throw ParseError(li + 1, "invalid frame count '" + std::string(words[1]) + "'");
  }
  ++li;
  next_content();
  if (li >= lines.size()) throw ParseError(lines.size(), "MOTION section lacks 'Frame Time:'");
  words = split_ws(lines[li]);
  if (words.size() != 3 || words[0] != "Frame" || words[1] != "Time:") {
    throw ParseError(li + 1, "expected 'Frame Time: <seconds>'");
  }
  const auto ft = to_double(words[2]);
  if (!ft || !(*ft > 0.0)) throw ParseError(li + 1, "invalid frame time '" + std::string(words[2]) + "'");
  clip.frame_time = *ft;
  ++li;

  const auto n = static_cast<std::size_t>(*frame_count);
  std::vector<double> values;
  values.reserve(n * width);
  std::size_t rows = 0;
  for (; li < lines.size(); ++li) {
    const auto row = split_ws(lines[li]);
    if (row.empty()) continue;
    if (rows == n) throw ParseError(li + 1, "more frame rows than the declared " + std::to_string(n));
    if (row.size() != width) {
      throw ParseError(li + 1, "frame " + std::to_string(rows) + " has " + std::to_string(row.size()) +
                                   " values but the hierarchy declares " + std::to_string(width) + " channels");
    }
    for (auto w : row) {
      const auto v = to_double(w);
      if (!v) throw ParseError(li + 1, "non-numeric channel value '" + std::string(w) + "'");
      values.push_back(*v);
    }
    ++rows;
  }
  if (rows != n) {
    throw ParseError(lines.size(), "expected " + std::to_string(n) + " frame rows, found " + std::to_string(rows));
  }
  if (n > 0 && width > 0) clip.frames = Tensor({n, width}, std::move(values));
  clip.skeleton.validate();
  return clip;
}

BvhClip load_bvh(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open BVH file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_bvh(ss.str());
}

std::vector<Pose> clip_poses(const BvhClip& clip) {
  const auto& s = clip.skeleton;
  const std::size_t width = clip.layout.width();
  std::vector<Pose> poses;
  for (std::size_t f = 0; f < clip.frame_count(); ++f) {
    Pose pose = rest_pose(s);
    const auto row = clip.frames.row(f);
    std::size_t col = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      std::array<Axis, 3> order{};
      std::array<double, 3> angles{};
      int n_rot = 0;
      for (Channel c : clip.layout.channels[j]) {
        const double v = row[col++];
        if (is_rotation(c)) {
          order[static_cast<std::size_t>(n_rot)] = static_cast<Axis>(channel_axis(c));
          angles[static_cast<std::size_t>(n_rot)] = deg_to_rad(v);
          ++n_rot;
        } else {
          pose.translation[j][channel_axis(c)] = v;
        }
      }
      if (n_rot == 3) pose.local[j] = euler_to_matrix(order, angles);
    }
    if (col != width) throw DataError("BVH layout width mismatch");
    poses.push_back(std::move(pose));
  }
  return poses;
}

MotionSequence clip_to_motion(const BvhClip& clip) {
  if (clip.frame_count() == 0) throw DataError("BVH clip '" + clip.skeleton.name + "' has no frames");
  const auto poses = clip_poses(clip);
  return motion_from_poses(clip.skeleton, poses, 1.0 / clip.frame_time, clip.skeleton.species);
}

std::string export_bvh(const SkeletonGraph& s, const MotionSequence& motion, double frame_time,
                       const BvhLayout* layout) {
  s.validate();
  if (motion.num_joints() != s.size()) {
    throw DimensionError("export_bvh: motion has " + std::to_string(motion.num_joints()) +
                         " joints but the skeleton has " + std::to_string(s.size()));
  }
  if (!(frame_time > 0.0)) throw UsageError("export_bvh: frame time must be positive");
  const BvhLayout lay = layout ? *layout : BvhLayout::standard(s);
  if (lay.channels.size() != s.size() || lay.end_site.size() != s.size()) {
    throw DimensionError("export_bvh: layout does not match the skeleton's joint count");
  }
  const auto kids = s.children();
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (lay.end_site[j] && (j == 0 || !kids[j].empty() || !lay.channels[j].empty())) {
      throw UsageError("export_bvh: joint '" + s.joints[j].name + "' cannot be written as End Site");
    }
    if (!lay.end_site[j] && lay.channels[j].empty()) {
      throw UsageError("export_bvh: joint '" + s.joints[j].name + "' needs channels");
    }
  }

  std::string out = "HIERARCHY\n";
  std::vector<std::size_t> order;  // file order of joints
  auto write_joint = [&](auto&& self, std::size_t j, int depth) -> void {
    const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
    order.push_back(j);
    if (lay.end_site[j]) {
      out += pad + "End Site\n";
    } else {
      out += pad + (j == 0 ? "ROOT " : "JOINT ") + s.joints[j].name + "\n";
    }
    out += pad + "{\n" + pad + "  OFFSET";
    for (double v : s.joints[j].offset) {
      out += ' ';
      append_number(out, v);
    }
    out += '\n';
    if (!lay.end_site[j]) {
      out += pad + "  CHANNELS " + std::to_string(lay.channels[j].size());
      for (Channel c : lay.channels[j]) {
        out += ' ';
        out += channel_name(c);
      }
      out += '\n';
    }
    for (std::size_t c : kids[j]) self(self, c, depth + 1);
    out += pad + "}\n";
  };
  write_joint(write_joint, 0, 0);

  out += "MOTION\nFrames: " + std::to_string(motion.num_frames()) + "\nFrame Time: ";
  append_number(out, frame_time);
  out += '\n';
  for (std::size_t t = 0; t < motion.num_frames(); ++t) {
    const Pose pose = pose_at(s, motion, t);
    bool first = true;
    for (std::size_t j : order) {
      const auto& chans = lay.channels[j];
      std::array<Axis, 3> rot_order{};
      int n_rot = 0;
      for (Channel c : chans)
        if (is_rotation(c)) rot_order[static_cast<std::size_t>(n_rot++)] = static_cast<Axis>(channel_axis(c));
      std::array<double, 3> angles{};
      if (n_rot == 3) angles = matrix_to_euler(pose.local[j], rot_order);
      int k = 0;
      for (Channel c : chans) {
        if (!first) out += ' ';
        first = false;
        append_number(out, is_rotation(c) ? rad_to_deg(angles[static_cast<std::size_t>(k++)])
                                          : pose.translation[j][channel_axis(c)]);
      }
    }
    out += '\n';
  }
  return out;
}

}  // namespace topomo
