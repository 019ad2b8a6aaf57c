// Copyright 2026 the umct authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef UMCT_IO_HPP
#define UMCT_IO_HPP

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "umct/core.hpp"

namespace umct {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

// Chunked binary container for volumetric grids (see docs/formats.md).
//   magic "UMCT" | version u32 | dtype u32 | ndim u32 | n_classes u32 |
//   dims u64*ndim | spacing f64*3 | origin f64*3 | row-major voxel data
// All fields little-endian. dtype: 1 = f32, 2 = f64, 3 = i32.
// ndim is 3 for volumes and labels, 4 (C,D,H,W) for probability maps.
namespace container {
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kF32 = 1;
constexpr std::uint32_t kF64 = 2;
constexpr std::uint32_t kI32 = 3;

template <typename Scalar> struct dtype_code;
template <> struct dtype_code<float> { static constexpr std::uint32_t value = kF32; };
template <> struct dtype_code<double> { static constexpr std::uint32_t value = kF64; };
template <> struct dtype_code<std::int32_t> { static constexpr std::uint32_t value = kI32; };
}  // namespace container

namespace detail {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ComputeError(std::string("container read failed at ") + what);
  return v;
}

inline void write_container_header(std::ostream& os, std::uint32_t dtype,
                                   const std::vector<std::uint64_t>& dims,
                                   std::uint32_t n_classes,
                                   const Eigen::Vector3d& spacing,
                                   const Eigen::Vector3d& origin) {
  os.write("UMCT", 4);
  write_pod(os, container::kVersion);
  write_pod(os, dtype);
  write_pod(os, static_cast<std::uint32_t>(dims.size()));
  write_pod(os, n_classes);
  for (auto d : dims) write_pod(os, d);
  for (int k = 0; k < 3; ++k) write_pod(os, spacing[k]);
  for (int k = 0; k < 3; ++k) write_pod(os, origin[k]);
}

struct ContainerHeader {
  std::uint32_t version = 0;
  std::uint32_t dtype = 0;
  std::uint32_t n_classes = 0;
  std::vector<std::uint64_t> dims;
  Eigen::Vector3d spacing{1, 1, 1};
  Eigen::Vector3d origin{0, 0, 0};
};

inline ContainerHeader read_container_header(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "UMCT")
    throw ComputeError("not a UMCT container (bad magic)");
  ContainerHeader h;
  h.version = read_pod<std::uint32_t>(is, "version");
  if (h.version != container::kVersion)
    throw ComputeError("unsupported container version " + std::to_string(h.version));
  h.dtype = read_pod<std::uint32_t>(is, "dtype");
  auto ndim = read_pod<std::uint32_t>(is, "ndim");
  if (ndim != 3 && ndim != 4) throw ComputeError("container ndim must be 3 or 4");
  h.n_classes = read_pod<std::uint32_t>(is, "n_classes");
  h.dims.resize(ndim);
  for (auto& d : h.dims) d = read_pod<std::uint64_t>(is, "dims");
  for (int k = 0; k < 3; ++k) h.spacing[k] = read_pod<double>(is, "spacing");
  for (int k = 0; k < 3; ++k) h.origin[k] = read_pod<double>(is, "origin");
  return h;
}

template <typename T>
void read_payload(std::istream& is, T* dst, std::size_t count) {
  is.read(reinterpret_cast<char*>(dst),
          static_cast<std::streamsize>(count * sizeof(T)));
  if (!is) throw ComputeError("container read failed at payload");
}

inline std::ofstream open_out(const std::string& path) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ComputeError("cannot open for writing: " + path);
  return os;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ComputeError("cannot open for reading: " + path);
  return is;
}

}  // namespace detail

template <typename Scalar>
void write_volume(const std::string& path, const Volume3D<Scalar>& v) {
  auto os = detail::open_out(path);
  detail::write_container_header(
      os, container::dtype_code<Scalar>::value,
      {std::uint64_t(v.shape[0]), std::uint64_t(v.shape[1]), std::uint64_t(v.shape[2])},
      0, v.spacing, v.origin);
  os.write(reinterpret_cast<const char*>(v.data.data()),
           static_cast<std::streamsize>(sizeof(Scalar) * v.data.size()));
  if (!os) throw ComputeError("container write failed: " + path);
}

inline void write_label(const std::string& path, const LabelMap& m) {
  auto os = detail::open_out(path);
  detail::write_container_header(
      os, container::kI32,
      {std::uint64_t(m.shape[0]), std::uint64_t(m.shape[1]), std::uint64_t(m.shape[2])},
      static_cast<std::uint32_t>(m.n_classes), {1, 1, 1}, {0, 0, 0});
  os.write(reinterpret_cast<const char*>(m.data.data()),
           static_cast<std::streamsize>(sizeof(std::int32_t) * m.data.size()));
  if (!os) throw ComputeError("container write failed: " + path);
}

template <typename Scalar>
void write_prob(const std::string& path, const ProbMap<Scalar>& p) {
  auto os = detail::open_out(path);
  detail::write_container_header(
      os, container::dtype_code<Scalar>::value,
      {std::uint64_t(p.n_classes), std::uint64_t(p.shape[0]),
       std::uint64_t(p.shape[1]), std::uint64_t(p.shape[2])},
      static_cast<std::uint32_t>(p.n_classes), {1, 1, 1}, {0, 0, 0});
  os.write(reinterpret_cast<const char*>(p.data.data()),
           static_cast<std::streamsize>(sizeof(Scalar) * p.data.size()));
  if (!os) throw ComputeError("container write failed: " + path);
}

template <typename Scalar>
Volume3D<Scalar> read_volume(const std::string& path) {
  auto is = detail::open_in(path);
  auto h = detail::read_container_header(is);
  if (h.dims.size() != 3) throw ComputeError("expected 3-d volume: " + path);
  if (h.dtype != container::dtype_code<Scalar>::value)
    throw ComputeError("volume dtype mismatch: " + path);
  Volume3D<Scalar> v;
  v.shape = {Index(h.dims[0]), Index(h.dims[1]), Index(h.dims[2])};
  v.spacing = h.spacing;
  v.origin = h.origin;
  v.data.resize(volume_of(v.shape));
  detail::read_payload(is, v.data.data(), static_cast<std::size_t>(v.data.size()));
  return v;
}

inline LabelMap read_label(const std::string& path) {
  auto is = detail::open_in(path);
  auto h = detail::read_container_header(is);
  if (h.dims.size() != 3) throw ComputeError("expected 3-d label map: " + path);
  if (h.dtype != container::kI32) throw ComputeError("label dtype mismatch: " + path);
  LabelMap m;
  m.shape = {Index(h.dims[0]), Index(h.dims[1]), Index(h.dims[2])};
  m.n_classes = static_cast<int>(h.n_classes);
  m.data.resize(volume_of(m.shape));
  detail::read_payload(is, m.data.data(), static_cast<std::size_t>(m.data.size()));
  return m;
}

template <typename Scalar>
ProbMap<Scalar> read_prob(const std::string& path) {
  auto is = detail::open_in(path);
  auto h = detail::read_container_header(is);
  if (h.dims.size() != 4) throw ComputeError("expected 4-d prob map: " + path);
  if (h.dtype != container::dtype_code<Scalar>::value)
    throw ComputeError("prob dtype mismatch: " + path);
  ProbMap<Scalar> p;
  p.n_classes = static_cast<int>(h.dims[0]);
  p.shape = {Index(h.dims[1]), Index(h.dims[2]), Index(h.dims[3])};
  p.data.resize(volume_of(p.shape) * p.n_classes);
  detail::read_payload(is, p.data.data(), static_cast<std::size_t>(p.data.size()));
  return p;
}

}  // namespace umct

#endif  // UMCT_IO_HPP
