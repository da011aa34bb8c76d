#include "adaseq/serialize.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace adaseq {

namespace {

constexpr char kCheckpointMagic[8] = {'A', 'S', 'E', 'Q', 'C', 'K', 'P', 'T'};
constexpr char kCacheMagic[8] = {'A', 'S', 'E', 'Q', 'D', 'A', 'T', 'A'};
constexpr uint32_t kFormatVersion = 1;

void write_bytes(std::ostream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::istream& in, void* p, size_t n, const std::string& what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!in) throw DataError("truncated file while reading " + what);
}

template <typename T>
void write_pod(std::ostream& out, T v) {
  write_bytes(out, &v, sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& what) {
  T v{};
  read_bytes(in, &v, sizeof(T), what);
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
  write_bytes(out, s.data(), s.size());
}

std::string read_string(std::istream& in, const std::string& what) {
  uint32_t len = read_pod<uint32_t>(in, what);
  std::string s(len, '\0');
  if (len > 0) read_bytes(in, s.data(), len, what);
  return s;
}

void write_tensor(std::ostream& out, const Tensor& t) {
  write_pod<uint64_t>(out, static_cast<uint64_t>(t.rows));
  write_pod<uint64_t>(out, static_cast<uint64_t>(t.cols));
  write_bytes(out, t.data.data(), t.size() * sizeof(double));
}

Tensor read_tensor(std::istream& in, const std::string& what) {
  uint64_t rows = read_pod<uint64_t>(in, what);
  uint64_t cols = read_pod<uint64_t>(in, what);
  Tensor t(static_cast<int>(rows), static_cast<int>(cols));
  if (t.size() > 0) read_bytes(in, t.data.data(), t.size() * sizeof(double), what);
  return t;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  write_bytes(out, kCheckpointMagic, sizeof(kCheckpointMagic));
  write_pod<uint32_t>(out, kFormatVersion);
  write_pod<uint32_t>(out, static_cast<uint32_t>(cfg.arch));
  write_pod<uint32_t>(out, static_cast<uint32_t>(cfg.hidden));
  write_pod<uint32_t>(out, static_cast<uint32_t>(cfg.cells));
  write_pod<uint32_t>(out, static_cast<uint32_t>(cfg.input_dim));
  write_pod<uint32_t>(out, static_cast<uint32_t>(cfg.num_classes));
  write_pod<double>(out, cfg.mask.epsilon);
  write_pod<double>(out, cfg.mask.sharpness);
  write_pod<uint64_t>(out, cfg.seed);

  uint32_t count = 0;
  params.visit([&count](const std::string&, const Tensor&) { ++count; });
  write_pod<uint32_t>(out, count);
  params.visit([&out](const std::string& name, const Tensor& t) {
    write_string(out, name);
    write_tensor(out, t);
  });
  if (!out) throw DataError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  read_bytes(in, magic, sizeof(magic), "checkpoint magic");
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw DataError("not a checkpoint file: " + path);
  }
  uint32_t version = read_pod<uint32_t>(in, "version");
  if (version != kFormatVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.config.arch = static_cast<Arch>(read_pod<uint32_t>(in, "arch"));
  ck.config.hidden = static_cast<int>(read_pod<uint32_t>(in, "hidden"));
  ck.config.cells = static_cast<int>(read_pod<uint32_t>(in, "cells"));
  ck.config.input_dim = static_cast<int>(read_pod<uint32_t>(in, "input_dim"));
  ck.config.num_classes = static_cast<int>(read_pod<uint32_t>(in, "num_classes"));
  ck.config.mask.epsilon = read_pod<double>(in, "epsilon");
  ck.config.mask.sharpness = read_pod<double>(in, "sharpness");
  ck.config.seed = read_pod<uint64_t>(in, "seed");

  std::map<std::string, Tensor> tensors;
  uint32_t count = read_pod<uint32_t>(in, "tensor count");
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = read_string(in, "tensor name");
    tensors[name] = read_tensor(in, name);
  }
  ck.params = ModelParams::init(ck.config);
  ck.params.visit([&tensors, &path](const std::string& name, Tensor& t) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("checkpoint missing tensor " + name + ": " + path);
    if (!t.same_shape(it->second)) {
      throw DimensionError("checkpoint " + name, it->second.shape_str(), t.shape_str());
    }
    t = it->second;
  });
  return ck;
}

void save_cache(const std::string& path, const SequenceDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset cache: " + path);
  write_bytes(out, kCacheMagic, sizeof(kCacheMagic));
  write_pod<uint32_t>(out, kFormatVersion);
  write_pod<double>(out, ds.meta.r);
  write_pod<uint64_t>(out, static_cast<uint64_t>(ds.meta.n));
  write_pod<uint64_t>(out, ds.meta.seed);
  write_pod<uint64_t>(out, static_cast<uint64_t>(ds.meta.feature_dim));
  write_pod<uint64_t>(out, static_cast<uint64_t>(ds.meta.class_ids.size()));
  for (int id : ds.meta.class_ids) write_pod<int64_t>(out, id);
  write_pod<uint64_t>(out, static_cast<uint64_t>(ds.sequences.size()));
  for (const auto& seq : ds.sequences) {
    write_pod<int64_t>(out, seq.subject_id);
    write_pod<int8_t>(out, static_cast<int8_t>(seq.split));
    write_tensor(out, seq.inputs);
    write_pod<uint64_t>(out, static_cast<uint64_t>(seq.labels.size()));
    for (int label : seq.labels) write_pod<int32_t>(out, label);
  }
  if (!out) throw DataError("write failed: " + path);
}

SequenceDataset load_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset cache: " + path);
  char magic[8];
  read_bytes(in, magic, sizeof(magic), "cache magic");
  if (std::memcmp(magic, kCacheMagic, sizeof(magic)) != 0) {
    throw DataError("not a dataset cache file: " + path);
  }
  uint32_t version = read_pod<uint32_t>(in, "version");
  if (version != kFormatVersion) {
    throw DataError("unsupported cache version " + std::to_string(version));
  }
  SequenceDataset ds;
  ds.meta.r = read_pod<double>(in, "meta.r");
  ds.meta.n = static_cast<int>(read_pod<uint64_t>(in, "meta.n"));
  ds.meta.seed = read_pod<uint64_t>(in, "meta.seed");
  ds.meta.feature_dim = static_cast<int>(read_pod<uint64_t>(in, "meta.feature_dim"));
  uint64_t classes = read_pod<uint64_t>(in, "class count");
  ds.meta.class_ids.resize(classes);
  for (uint64_t i = 0; i < classes; ++i) {
    ds.meta.class_ids[i] = static_cast<int>(read_pod<int64_t>(in, "class id"));
  }
  uint64_t count = read_pod<uint64_t>(in, "sequence count");
  ds.sequences.resize(count);
  for (uint64_t i = 0; i < count; ++i) {
    Sequence& seq = ds.sequences[i];
    seq.subject_id = static_cast<int>(read_pod<int64_t>(in, "subject id"));
    seq.split = read_pod<int8_t>(in, "split");
    seq.inputs = read_tensor(in, "sequence inputs");
    uint64_t labels = read_pod<uint64_t>(in, "label count");
    seq.labels.resize(labels);
    for (uint64_t j = 0; j < labels; ++j) {
      seq.labels[j] = read_pod<int32_t>(in, "label");
    }
  }
  return ds;
}

}  // namespace adaseq
