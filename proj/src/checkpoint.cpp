#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "fer/learner.hpp"

namespace fer::learner {

namespace {

constexpr const char* kMagic = "fer-checkpoint-v1";

std::string config_line(const ModelConfig& c) {
  std::string channels;
  for (std::size_t i = 0; i < c.channels.size(); ++i) {
    if (i) channels += '|';
    channels += std::to_string(c.channels[i]);
  }
  std::ostringstream out;
  out << kMagic << " input_width=" << c.input_width << ",input_height=" << c.input_height
      << ",channels=" << channels << ",head_classes=" << c.head_classes
      << ",rng_seed=" << c.rng_seed;
  return out.str();
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  return parts;
}

long parse_long(const std::string& s, const char* what) {
  if (s.empty()) throw std::runtime_error(std::string("checkpoint: empty ") + what);
  std::size_t used = 0;
  long v;
  try {
    v = std::stol(s, &used);
  } catch (const std::exception&) {
    throw std::runtime_error(std::string("checkpoint: bad ") + what + " `" + s + "`");
  }
  if (used != s.size()) throw std::runtime_error(std::string("checkpoint: bad ") + what + " `" + s + "`");
  return v;
}

ModelConfig parse_config_line(const std::string& line) {
  const std::size_t space = line.find(' ');
  if (line.substr(0, space) != kMagic) {
    throw std::runtime_error("checkpoint: unsupported format (line 1 is not " + std::string(kMagic) + ")");
  }
  if (space == std::string::npos) throw std::runtime_error("checkpoint: missing config on line 1");
  ModelConfig cfg;
  cfg.channels.clear();
  bool saw[5] = {};
  for (const auto& kv : split_on(line.substr(space + 1), ',')) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) throw std::runtime_error("checkpoint: malformed config pair `" + kv + "`");
    const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
    if (key == "input_width") {
      cfg.input_width = static_cast<int>(parse_long(value, "input_width"));
      saw[0] = true;
    } else if (key == "input_height") {
      cfg.input_height = static_cast<int>(parse_long(value, "input_height"));
      saw[1] = true;
    } else if (key == "channels") {
      for (const auto& c : split_on(value, '|')) cfg.channels.push_back(static_cast<int>(parse_long(c, "channel count")));
      saw[2] = true;
    } else if (key == "head_classes") {
      cfg.head_classes = static_cast<int>(parse_long(value, "head_classes"));
      saw[3] = true;
    } else if (key == "rng_seed") {
      cfg.rng_seed = static_cast<std::uint64_t>(std::stoull(value));
      saw[4] = true;
    } else {
      throw std::runtime_error("checkpoint: unknown config key `" + key + "`");
    }
  }
  for (bool s : saw) {
    if (!s) throw std::runtime_error("checkpoint: incomplete config on line 1");
  }
  return cfg;
}

void append_f32_le(std::vector<std::uint8_t>& out, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  out.push_back(static_cast<std::uint8_t>(bits & 0xff));
  out.push_back(static_cast<std::uint8_t>((bits >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((bits >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((bits >> 24) & 0xff));
}

double read_f32_le(const std::uint8_t* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  float f;
  std::memcpy(&f, &bits, 4);
  return static_cast<double>(f);
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ModelParameters& params) {
  std::string text = config_line(params.config);
  text += '\n';
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    const Tensor& t = params.tensors[i];
    if (i) text += ';';
    text += t.name;
    text += ':';
    for (std::size_t j = 0; j < t.shape.size(); ++j) {
      if (j) text += 'x';
      text += std::to_string(t.shape[j]);
    }
    text += ':';
    text += t.frozen ? '1' : '0';
  }
  text += '\n';

  std::vector<std::uint8_t> out(text.begin(), text.end());
  std::size_t elements = 0;
  for (const auto& t : params.tensors) elements += t.size();
  out.reserve(out.size() + elements * 4);
  for (const auto& t : params.tensors) {
    for (double v : t.data) append_f32_le(out, v);
  }
  return out;
}

ModelParameters parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
  // Line 1: version + config. Line 2: tensor directory. Rest: f32 payload.
  std::size_t pos = 0;
  auto read_line = [&](const char* what) {
    std::string line;
    while (pos < bytes.size() && bytes[pos] != '\n') line += static_cast<char>(bytes[pos++]);
    if (pos >= bytes.size()) throw std::runtime_error(std::string("checkpoint: truncated before ") + what);
    ++pos;  // consume newline
    return line;
  };
  const std::string header = read_line("config line");
  const std::string directory = read_line("tensor directory");

  ModelParameters params;
  params.config = parse_config_line(header);

  for (const auto& entry : split_on(directory, ';')) {
    const auto parts = split_on(entry, ':');
    if (parts.size() != 3 || parts[0].empty()) {
      throw std::runtime_error("checkpoint: malformed tensor directory entry `" + entry + "`");
    }
    Tensor t;
    t.name = parts[0];
    for (const auto& dim : split_on(parts[1], 'x')) {
      t.shape.push_back(static_cast<int>(parse_long(dim, "tensor dimension")));
    }
    if (parts[2] == "0") {
      t.frozen = false;
    } else if (parts[2] == "1") {
      t.frozen = true;
    } else {
      throw std::runtime_error("checkpoint: bad frozen flag in `" + entry + "`");
    }
    std::size_t elements = 1;
    for (int d : t.shape) {
      if (d < 1) throw std::runtime_error("checkpoint: non-positive dimension in `" + entry + "`");
      elements *= static_cast<std::size_t>(d);
    }
    t.data.resize(elements);
    if (t.name.rfind("block", 0) == 0) {
      t.block_index = static_cast<int>(parse_long(t.name.substr(5, t.name.find('.') - 5), "block index"));
    }
    params.tensors.push_back(std::move(t));
  }

  // Cross-check the directory against the config-implied architecture.
  const ModelParameters expected = init_model(params.config);
  if (expected.tensors.size() != params.tensors.size()) {
    throw std::runtime_error("checkpoint: tensor directory does not match config (tensor count)");
  }
  for (std::size_t i = 0; i < expected.tensors.size(); ++i) {
    if (expected.tensors[i].name != params.tensors[i].name ||
        expected.tensors[i].shape != params.tensors[i].shape) {
      throw std::runtime_error("checkpoint: tensor directory does not match config at " +
                               params.tensors[i].name);
    }
  }

  for (auto& t : params.tensors) {
    const std::size_t need = t.size() * 4;
    if (bytes.size() - pos < need) {
      throw std::runtime_error("checkpoint: tensor data truncated in " + t.name);
    }
    for (std::size_t j = 0; j < t.size(); ++j) t.data[j] = read_f32_le(bytes.data() + pos + j * 4);
    pos += need;
  }
  if (pos != bytes.size()) {
    throw std::runtime_error("checkpoint: " + std::to_string(bytes.size() - pos) +
                             " trailing bytes after tensor data");
  }
  return params;
}

void save_checkpoint(const ModelParameters& params, const std::string& path) {
  const auto bytes = serialize_checkpoint(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

ModelParameters load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_checkpoint(bytes);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

}  // namespace fer::learner
