// Copyright (c) 2026 The voicecloak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Model container ("AVXM"): binary, little-endian. Layout: magic, version
// u32, kind u8 (0 = encoder, 1 = head, 2 = flow), a dimension header for the
// kind, then raw f64 parameter blocks. All dimensions are validated on load.

#ifndef VOICECLOAK_MODEL_IO_HPP_
#define VOICECLOAK_MODEL_IO_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>

#include "voicecloak/binary_io.hpp"
#include "voicecloak/embeddings.hpp"
#include "voicecloak/errors.hpp"
#include "voicecloak/synthesis.hpp"

namespace voicecloak {

namespace model_io_detail {

constexpr char kModelMagic[4] = {'A', 'V', 'X', 'M'};
constexpr std::uint32_t kModelVersion = 1;
constexpr std::uint8_t kKindEncoder = 0;
constexpr std::uint8_t kKindHead = 1;
constexpr std::uint8_t kKindFlow = 2;
constexpr std::uint32_t kMaxDim = 1u << 16;

inline void write_matrix(BinaryWriter& w, const Eigen::MatrixXd& m) {
  w.write_u32(static_cast<std::uint32_t>(m.rows()));
  w.write_u32(static_cast<std::uint32_t>(m.cols()));
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) w.write_f64(m(r, c));
  }
}

inline void write_vector(BinaryWriter& w, const Eigen::VectorXd& v) {
  w.write_u32(static_cast<std::uint32_t>(v.size()));
  for (int i = 0; i < v.size(); ++i) w.write_f64(v[i]);
}

inline Eigen::MatrixXd read_matrix(BinaryReader& r, std::uint32_t want_rows,
                                   std::uint32_t want_cols) {
  const std::uint32_t rows = r.read_u32();
  const std::uint32_t cols = r.read_u32();
  if (rows != want_rows || cols != want_cols) r.fail_at("matrix shape mismatch");
  Eigen::MatrixXd m(static_cast<int>(rows), static_cast<int>(cols));
  for (std::uint32_t i = 0; i < rows; ++i) {
    for (std::uint32_t j = 0; j < cols; ++j) {
      const double v = r.read_f64();
      if (!std::isfinite(v)) r.fail_at("non-finite parameter");
      m(static_cast<int>(i), static_cast<int>(j)) = v;
    }
  }
  return m;
}

inline Eigen::VectorXd read_vector(BinaryReader& r, std::uint32_t want_size) {
  const std::uint32_t size = r.read_u32();
  if (size != want_size) r.fail_at("vector length mismatch");
  Eigen::VectorXd v(static_cast<int>(size));
  for (std::uint32_t i = 0; i < size; ++i) {
    const double x = r.read_f64();
    if (!std::isfinite(x)) r.fail_at("non-finite parameter");
    v[static_cast<int>(i)] = x;
  }
  return v;
}

inline void open_model(BinaryReader& r, std::uint8_t want_kind) {
  r.expect_magic(kModelMagic);
  if (r.read_u32() != kModelVersion) r.fail_at("unsupported format version");
  if (r.read_u8() != want_kind) r.fail_at("wrong model kind");
}

inline std::uint32_t read_dim(BinaryReader& r) {
  const std::uint32_t d = r.read_u32();
  if (d < 1 || d > kMaxDim) r.fail_at("implausible dimension");
  return d;
}

}  // namespace model_io_detail

inline void save_encoder(const SpeakerEncoder& encoder,
                         const std::filesystem::path& path) {
  using namespace model_io_detail;
  require(!encoder.layers.empty(), ErrorCode::kInvalidParameter,
          "encoder has no layers");
  BinaryWriter w(path);
  w.write_magic(kModelMagic);
  w.write_u32(kModelVersion);
  w.write_u8(kKindEncoder);
  w.write_u32(static_cast<std::uint32_t>(encoder.layers.size()));
  for (const auto& layer : encoder.layers) {
    write_matrix(w, layer.weight);
    write_vector(w, layer.bias);
  }
  w.finish();
}

inline SpeakerEncoder load_encoder(const std::filesystem::path& path) {
  using namespace model_io_detail;
  BinaryReader r(path);
  open_model(r, kKindEncoder);
  const std::uint32_t n_layers = read_dim(r);
  SpeakerEncoder encoder;
  int prev_rows = -1;
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    const std::uint32_t rows = r.read_u32();
    const std::uint32_t cols = r.read_u32();
    if (rows < 1 || rows > kMaxDim || cols < 1 || cols > kMaxDim) {
      r.fail_at("implausible layer shape");
    }
    if (prev_rows >= 0 && static_cast<int>(cols) != prev_rows) {
      r.fail_at("layer input does not match previous layer output");
    }
    EncoderLayer layer;
    layer.weight = Eigen::MatrixXd(static_cast<int>(rows), static_cast<int>(cols));
    for (std::uint32_t i = 0; i < rows; ++i) {
      for (std::uint32_t j = 0; j < cols; ++j) {
        const double v = r.read_f64();
        if (!std::isfinite(v)) r.fail_at("non-finite parameter");
        layer.weight(static_cast<int>(i), static_cast<int>(j)) = v;
      }
    }
    layer.bias = read_vector(r, rows);
    prev_rows = static_cast<int>(rows);
    encoder.layers.push_back(std::move(layer));
  }
  r.expect_end();
  return encoder;
}

inline void save_head(const SoftmaxHead& head,
                      const std::filesystem::path& path) {
  using namespace model_io_detail;
  BinaryWriter w(path);
  w.write_magic(kModelMagic);
  w.write_u32(kModelVersion);
  w.write_u8(kKindHead);
  w.write_u32(static_cast<std::uint32_t>(head.num_classes()));
  w.write_u32(static_cast<std::uint32_t>(head.embedding_dim()));
  for (const auto& label : head.class_labels) w.write_string(label);
  write_matrix(w, head.weights);
  write_vector(w, head.bias);
  w.finish();
}

inline SoftmaxHead load_head(const std::filesystem::path& path) {
  using namespace model_io_detail;
  BinaryReader r(path);
  open_model(r, kKindHead);
  const std::uint32_t n_classes = read_dim(r);
  const std::uint32_t emb_dim = read_dim(r);
  if (n_classes < 2) r.fail_at("head needs at least two classes");
  SoftmaxHead head;
  for (std::uint32_t c = 0; c < n_classes; ++c) {
    head.class_labels.push_back(r.read_string());
  }
  for (std::size_t i = 0; i < head.class_labels.size(); ++i) {
    for (std::size_t j = i + 1; j < head.class_labels.size(); ++j) {
      if (head.class_labels[i] == head.class_labels[j]) {
        r.fail_at("duplicate class label " + head.class_labels[i]);
      }
    }
  }
  head.weights = read_matrix(r, n_classes, emb_dim);
  head.bias = read_vector(r, n_classes);
  r.expect_end();
  return head;
}

inline void save_flow(const CouplingFlow& flow,
                      const std::filesystem::path& path) {
  using namespace model_io_detail;
  require(!flow.layers.empty(), ErrorCode::kInvalidParameter,
          "flow has no layers");
  BinaryWriter w(path);
  w.write_magic(kModelMagic);
  w.write_u32(kModelVersion);
  w.write_u8(kKindFlow);
  w.write_u32(static_cast<std::uint32_t>(flow.feature_dim));
  w.write_u32(static_cast<std::uint32_t>(flow.embedding_dim));
  w.write_u32(static_cast<std::uint32_t>(flow.layers.size()));
  for (const auto& layer : flow.layers) {
    w.write_u8(static_cast<std::uint8_t>(layer.keep_parity));
    write_matrix(w, layer.net.hidden_weight);
    write_vector(w, layer.net.hidden_bias);
    write_matrix(w, layer.net.output_weight);
    write_vector(w, layer.net.output_bias);
  }
  w.finish();
}

inline CouplingFlow load_flow(const std::filesystem::path& path) {
  using namespace model_io_detail;
  BinaryReader r(path);
  open_model(r, kKindFlow);
  CouplingFlow flow;
  flow.feature_dim = static_cast<int>(read_dim(r));
  flow.embedding_dim = static_cast<int>(read_dim(r));
  const std::uint32_t n_layers = read_dim(r);
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    CouplingLayer layer;
    const std::uint8_t parity = r.read_u8();
    if (parity > 1) r.fail_at("bad coupling parity");
    layer.keep_parity = parity;
    const int n_kept = static_cast<int>(
        synthesis_detail::kept_indices(flow.feature_dim, layer.keep_parity)
            .size());
    const int n_trans = flow.feature_dim - n_kept;
    const std::uint32_t cond_dim =
        static_cast<std::uint32_t>(n_kept + flow.embedding_dim + 1);
    const std::uint32_t hidden_rows = r.read_u32();
    const std::uint32_t hidden_cols = r.read_u32();
    if (hidden_rows < 1 || hidden_rows > kMaxDim || hidden_cols != cond_dim) {
      r.fail_at("conditioner hidden shape mismatch");
    }
    layer.net.hidden_weight =
        Eigen::MatrixXd(static_cast<int>(hidden_rows), static_cast<int>(hidden_cols));
    for (std::uint32_t i = 0; i < hidden_rows; ++i) {
      for (std::uint32_t j = 0; j < hidden_cols; ++j) {
        const double v = r.read_f64();
        if (!std::isfinite(v)) r.fail_at("non-finite parameter");
        layer.net.hidden_weight(static_cast<int>(i), static_cast<int>(j)) = v;
      }
    }
    layer.net.hidden_bias = read_vector(r, hidden_rows);
    layer.net.output_weight = read_matrix(
        r, static_cast<std::uint32_t>(2 * n_trans), hidden_rows);
    layer.net.output_bias =
        read_vector(r, static_cast<std::uint32_t>(2 * n_trans));
    flow.layers.push_back(std::move(layer));
  }
  r.expect_end();
  return flow;
}

}  // namespace voicecloak

#endif  // VOICECLOAK_MODEL_IO_HPP_
