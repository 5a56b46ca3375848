#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "intentspace/errors.hpp"
#include "intentspace/model.hpp"

namespace intentspace {

// Binary checkpoint, little-endian, raw IEEE doubles: header with dims and
// enums, then label names, then tensors in declared order, then expansion
// blocks. Save/load round-trips are bitwise exact.

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace detail {

constexpr char kCheckpointMagic[8] = {'I', 'S', 'P', 'C', 'H', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_u8(std::ostream& out, std::uint8_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_doubles(std::ostream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}
inline void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw FormatError("checkpoint: truncated file");
  return v;
}
inline std::uint8_t read_u8(std::istream& in) {
  std::uint8_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw FormatError("checkpoint: truncated file");
  return v;
}
inline void read_doubles(std::istream& in, std::vector<double>& v) {
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!in) throw FormatError("checkpoint: truncated tensor data");
}
inline std::string read_string(std::istream& in) {
  std::uint32_t n = read_u32(in);
  if (n > (1u << 20)) throw FormatError("checkpoint: implausible string length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw FormatError("checkpoint: truncated string");
  return s;
}

}  // namespace detail

inline void save_checkpoint(const IntentSpaceModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  using namespace detail;
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_u32(out, kCheckpointVersion);
  write_u32(out, static_cast<std::uint32_t>(model.hidden));
  write_u32(out, static_cast<std::uint32_t>(model.input_dim));
  write_u32(out, static_cast<std::uint32_t>(model.basis_count()));
  write_u32(out, static_cast<std::uint32_t>(model.intent_count()));
  write_u32(out, static_cast<std::uint32_t>(model.seen_intents));
  write_u8(out, static_cast<std::uint8_t>(model.bases.form));
  write_u32(out, static_cast<std::uint32_t>(model.bases.rank));
  write_u8(out, static_cast<std::uint8_t>(model.coords.mode));
  write_u8(out, static_cast<std::uint8_t>(model.scorer.kind));
  for (const auto& label : model.labels) write_string(out, label);

  write_doubles(out, model.input_weight.data);
  write_doubles(out, model.input_bias.data);
  write_doubles(out, model.initial_state.data);
  switch (model.bases.form) {
    case BasisForm::kFullMatrix:
      for (const auto& w : model.bases.full) write_doubles(out, w.data);
      break;
    case BasisForm::kReducedRank:
      for (const auto& f : model.bases.factors) write_doubles(out, f.data);
      break;
    case BasisForm::kVectorBias:
      for (const auto& w : model.bases.bias_vectors) write_doubles(out, w.data);
      break;
  }
  write_doubles(out, model.coords.beta.data);
  write_doubles(out, model.scorer.a.data);
  write_doubles(out, model.scorer.d.data);

  write_u32(out, static_cast<std::uint32_t>(model.expansions.per_intent.size()));
  for (const auto& [intent, mats] : model.expansions.per_intent) {
    write_u32(out, static_cast<std::uint32_t>(intent));
    for (const auto& m : mats) write_doubles(out, m.data);
  }
  if (!out) throw IoError("checkpoint write failed: " + path);
}

inline IntentSpaceModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  using namespace detail;
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw FormatError("not an intentspace checkpoint: " + path);
  }
  std::uint32_t version = read_u32(in);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  IntentSpaceModel model;
  model.hidden = read_u32(in);
  model.input_dim = read_u32(in);
  std::size_t b_count = read_u32(in);
  std::size_t c_total = read_u32(in);
  model.seen_intents = read_u32(in);
  std::uint8_t form = read_u8(in);
  if (form > 2) throw FormatError("checkpoint: bad basis form tag");
  model.bases.form = static_cast<BasisForm>(form);
  model.bases.hidden = model.hidden;
  model.bases.rank = read_u32(in);
  std::uint8_t mode = read_u8(in);
  if (mode > 1) throw FormatError("checkpoint: bad space mode tag");
  model.coords.mode = static_cast<SpaceMode>(mode);
  std::uint8_t scorer_kind = read_u8(in);
  if (scorer_kind > 1) throw FormatError("checkpoint: bad scorer kind tag");
  model.scorer.kind = static_cast<ScorerParams::Kind>(scorer_kind);
  for (std::size_t c = 0; c < c_total; ++c) model.labels.push_back(read_string(in));

  std::size_t h = model.hidden;
  model.input_weight = Matrix(h, model.input_dim);
  read_doubles(in, model.input_weight.data);
  model.input_bias = Vector(h);
  read_doubles(in, model.input_bias.data);
  model.initial_state = Vector(h);
  read_doubles(in, model.initial_state.data);
  switch (model.bases.form) {
    case BasisForm::kFullMatrix:
      for (std::size_t b = 0; b < b_count; ++b) {
        Matrix w(h, h);
        read_doubles(in, w.data);
        model.bases.full.push_back(std::move(w));
      }
      break;
    case BasisForm::kReducedRank:
      for (std::size_t b = 0; b < b_count; ++b) {
        Matrix f(model.bases.rank, h);
        read_doubles(in, f.data);
        model.bases.factors.push_back(std::move(f));
      }
      break;
    case BasisForm::kVectorBias:
      for (std::size_t b = 0; b < b_count; ++b) {
        Vector w(h);
        read_doubles(in, w.data);
        model.bases.bias_vectors.push_back(std::move(w));
      }
      break;
  }
  model.coords.beta = Matrix(c_total, b_count);
  read_doubles(in, model.coords.beta.data);
  std::size_t scorer_rows =
      model.scorer.kind == ScorerParams::Kind::kShared ? 1 : c_total;
  model.scorer.a = Matrix(scorer_rows, h);
  read_doubles(in, model.scorer.a.data);
  model.scorer.d = Vector(scorer_rows);
  read_doubles(in, model.scorer.d.data);

  std::uint32_t expansion_count = read_u32(in);
  for (std::uint32_t i = 0; i < expansion_count; ++i) {
    int intent = static_cast<int>(read_u32(in));
    if (intent < 0 || static_cast<std::size_t>(intent) >= c_total) {
      throw FormatError("checkpoint: expansion intent id out of range");
    }
    std::vector<Matrix> mats;
    for (std::size_t b = 0; b < b_count; ++b) {
      Matrix m(h, h);
      read_doubles(in, m.data);
      mats.push_back(std::move(m));
    }
    model.expansions.per_intent.emplace(intent, std::move(mats));
  }
  return model;
}

}  // namespace intentspace
