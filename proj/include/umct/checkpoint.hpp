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

#ifndef UMCT_CHECKPOINT_HPP
#define UMCT_CHECKPOINT_HPP

#include "umct/backbone.hpp"
#include "umct/io.hpp"

namespace umct {

// Checkpoint layout (see docs/formats.md):
//   magic "UMCK" | version u32 | config text (u32 len + bytes) |
//   view token (u32 len + bytes) | u64 param count | f32 params |
//   u8 has_momentum | f32 momentum | u64 hash(config text, token)
template <typename Scalar>
void write_checkpoint(const std::string& path, const ViewModel<Scalar>& m,
                      const ArrayX<Scalar>* momentum = nullptr) {
  auto os = detail::open_out(path);
  os.write("UMCK", 4);
  detail::write_pod(os, std::uint32_t(1));
  const std::string cfg = canonical_config_text(m.config);
  const std::string token = to_token(m.view);
  detail::write_pod(os, static_cast<std::uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  detail::write_pod(os, static_cast<std::uint32_t>(token.size()));
  os.write(token.data(), static_cast<std::streamsize>(token.size()));
  detail::write_pod(os, static_cast<std::uint64_t>(m.params.size()));
  for (Index i = 0; i < m.params.size(); ++i)
    detail::write_pod(os, static_cast<float>(m.params[i]));
  detail::write_pod(os, static_cast<std::uint8_t>(momentum ? 1 : 0));
  if (momentum)
    for (Index i = 0; i < momentum->size(); ++i)
      detail::write_pod(os, static_cast<float>((*momentum)[i]));
  detail::write_pod(os, detail::checkpoint_hash(cfg, token));
  if (!os) throw ComputeError("checkpoint write failed: " + path);
}

inline CheckpointData read_checkpoint(const std::string& path) {
  auto is = detail::open_in(path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "UMCK")
    throw ComputeError("not a UMCT checkpoint (bad magic): " + path);
  auto version = detail::read_pod<std::uint32_t>(is, "version");
  if (version != 1)
    throw ComputeError("unsupported checkpoint version " + std::to_string(version));
  CheckpointData ck;
  auto cfg_len = detail::read_pod<std::uint32_t>(is, "config length");
  ck.config_text.resize(cfg_len);
  is.read(ck.config_text.data(), cfg_len);
  auto tok_len = detail::read_pod<std::uint32_t>(is, "token length");
  ck.view_token.resize(tok_len);
  is.read(ck.view_token.data(), tok_len);
  if (!is) throw ComputeError("checkpoint read failed: " + path);
  auto n = detail::read_pod<std::uint64_t>(is, "param count");
  ck.params.resize(n);
  if (n) detail::read_payload(is, ck.params.data(), n);
  auto has_momentum = detail::read_pod<std::uint8_t>(is, "momentum flag");
  if (has_momentum) {
    ck.momentum.resize(n);
    if (n) detail::read_payload(is, ck.momentum.data(), n);
  }
  auto stored_hash = detail::read_pod<std::uint64_t>(is, "hash");
  if (stored_hash != detail::checkpoint_hash(ck.config_text, ck.view_token))
    throw ValidationError("hash-mismatch: checkpoint " + path);
  ck.config = parse_canonical_config(ck.config_text);
  if (ck.params.size() !=
      static_cast<std::size_t>(parameter_count(ck.config)))
    throw ComputeError("checkpoint parameter count does not match config: " + path);
  return ck;
}

template <typename Scalar = float>
ViewModel<Scalar> model_from_checkpoint(const CheckpointData& ck) {
  ViewModel<Scalar> m;
  m.config = ck.config;
  m.view = from_token(ck.view_token);
  m.layout = make_layout(ck.config);
  m.params.resize(m.layout.total);
  for (Index i = 0; i < m.params.size(); ++i)
    m.params[i] = Scalar(ck.params[static_cast<std::size_t>(i)]);
  return m;
}

}  // namespace umct

#endif  // UMCT_CHECKPOINT_HPP
