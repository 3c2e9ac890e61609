// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#include "hm4sr/core/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <string>

#include "hm4sr/core/binary_io.hpp"

namespace hm4sr {

namespace {

template <typename Real>
constexpr const char* dtype_name() {
  return sizeof(Real) == 4 ? "f32" : "f64";
}

struct ManifestLine {
  std::string name;
  std::string dtype;
  Shape shape;
};

Shape parse_dims(const std::string& text, const std::string& name) {
  Shape shape;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(part, &used);
      if (used != part.size() || v == 0) throw std::invalid_argument(part);
      shape.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw CheckpointError("checkpoint: bad shape '" + text + "' for tensor '" +
                            name + "'");
    }
  }
  if (shape.empty()) {
    throw CheckpointError("checkpoint: empty shape for tensor '" + name + "'");
  }
  return shape;
}

std::vector<ManifestLine> read_manifest(std::istream& in) {
  std::vector<ManifestLine> lines;
  std::string line;
  while (true) {
    if (!std::getline(in, line)) {
      throw CheckpointError("checkpoint: manifest is not terminated");
    }
    if (line.empty()) break;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
      throw CheckpointError("checkpoint: malformed manifest line '" + line + "'");
    }
    ManifestLine m;
    m.name = line.substr(0, t1);
    m.dtype = line.substr(t1 + 1, t2 - t1 - 1);
    if (m.dtype != "f32" && m.dtype != "f64") {
      throw CheckpointError("checkpoint: unknown dtype '" + m.dtype +
                            "' for tensor '" + m.name + "'");
    }
    m.shape = parse_dims(line.substr(t2 + 1), m.name);
    lines.push_back(std::move(m));
  }
  return lines;
}

template <typename Stored, typename Real>
std::vector<Real> read_values(std::istream& in, const ManifestLine& m) {
  std::vector<Stored> raw(shape_numel(m.shape));
  if (!read_le<Stored>(in, raw)) {
    throw CheckpointError("checkpoint: blob truncated inside tensor '" + m.name + "'");
  }
  return std::vector<Real>(raw.begin(), raw.end());
}

}  // namespace

template <typename Real>
void save_checkpoint(const std::filesystem::path& path,
                     std::span<const NamedTensor<Real>> tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("checkpoint: cannot write " + path.string());
  for (const auto& t : tensors) {
    if (t.name.find_first_of("\t\n") != std::string::npos || t.name.empty()) {
      throw CheckpointError("checkpoint: invalid tensor name '" + t.name + "'");
    }
    out << t.name << '\t' << dtype_name<Real>() << '\t';
    const Shape& s = t.tensor.shape();
    for (std::size_t i = 0; i < s.size(); ++i) out << (i ? "," : "") << s[i];
    out << '\n';
  }
  out << '\n';
  for (const auto& t : tensors) write_le<Real>(out, t.tensor.values());
  if (!out) throw CheckpointError("checkpoint: write failed for " + path.string());
}

template <typename Real>
std::vector<NamedTensor<Real>> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  const auto manifest = read_manifest(in);
  std::vector<NamedTensor<Real>> tensors;
  for (const auto& m : manifest) {
    auto values = m.dtype == "f32" ? read_values<float, Real>(in, m)
                                   : read_values<double, Real>(in, m);
    tensors.push_back({m.name, Tensor<Real>::from_values(m.shape, std::move(values))});
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError("checkpoint: trailing bytes after last tensor in " +
                          path.string());
  }
  return tensors;
}

template <typename Real>
void restore_checkpoint(const std::filesystem::path& path, ParamStore<Real>& params) {
  auto loaded = load_checkpoint<Real>(path);
  auto& entries = params.entries();
  if (loaded.size() != entries.size()) {
    throw CheckpointError("checkpoint: holds " + std::to_string(loaded.size()) +
                          " tensors, model has " + std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    if (loaded[i].name != entries[i].name) {
      throw CheckpointError("checkpoint: expected tensor '" + entries[i].name +
                            "', found '" + loaded[i].name + "'");
    }
    if (loaded[i].tensor.shape() != entries[i].tensor.shape()) {
      throw CheckpointError("checkpoint: shape mismatch for tensor '" +
                            entries[i].name + "': " +
                            shape_to_string(loaded[i].tensor.shape()) + " vs " +
                            shape_to_string(entries[i].tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    auto src = loaded[i].tensor.values();
    std::copy(src.begin(), src.end(), entries[i].tensor.values().begin());
  }
}

template void save_checkpoint<float>(const std::filesystem::path&,
                                     std::span<const NamedTensor<float>>);
template void save_checkpoint<double>(const std::filesystem::path&,
                                      std::span<const NamedTensor<double>>);
template std::vector<NamedTensor<float>> load_checkpoint<float>(
    const std::filesystem::path&);
template std::vector<NamedTensor<double>> load_checkpoint<double>(
    const std::filesystem::path&);
template void restore_checkpoint<float>(const std::filesystem::path&,
                                        ParamStore<float>&);
template void restore_checkpoint<double>(const std::filesystem::path&,
                                         ParamStore<double>&);

}  // namespace hm4sr
