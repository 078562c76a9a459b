// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace prunekit::model {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

class Writer {
 public:
  template <class T>
  void pod(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void u8(std::uint8_t v) { pod(v); }
  void u32(std::uint64_t v) {
    if (v > 0xffffffffULL) fail(ErrorKind::kFormat, "checkpoint: value does not fit in u32");
    pod(static_cast<std::uint32_t>(v));
  }
  void f32(float v) { pod(v); }
  void f64(double v) { pod(v); }
  void str(const std::string& s) {
    u32(s.size());
    out_ += s;
  }
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  template <class T>
  T pod(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::uint8_t u8(const char* what) { return pod<std::uint8_t>(what); }
  std::uint32_t u32(const char* what) { return pod<std::uint32_t>(what); }
  float f32(const char* what) { return pod<float>(what); }
  double f64(const char* what) { return pod<double>(what); }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void bytes(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, in_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == in_.size(); }
  [[noreturn]] void error(const std::string& msg) const {
    fail(ErrorKind::kFormat, "checkpoint: " + msg + " at offset " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) error(std::string("truncated while reading ") + what);
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

struct Record {
  DType dtype = DType::kF32;
  numerics::Shape shape;
  bool requires_grad = false;
  std::vector<double> values;
  quant::QuantizedTensor quantized;
  bool used = false;
};

void write_shape(Writer& w, const numerics::Shape& s) {
  w.u32(s.size());
  for (std::size_t e : s) w.u32(e);
}

void write_f32(Writer& w, const std::string& name, const numerics::Tensor& t) {
  w.str(name);
  w.u8(static_cast<std::uint8_t>(DType::kF32));
  write_shape(w, t.shape());
  w.u8(t.requires_grad() ? 1 : 0);
  for (double v : t.data()) w.f32(static_cast<float>(v));
}

void write_nf4(Writer& w, const std::string& name, const quant::QuantizedTensor& q) {
  w.str(name);
  w.u8(static_cast<std::uint8_t>(DType::kNf4Packed));
  write_shape(w, q.shape);
  w.u8(0);
  w.u32(q.block_size);
  w.u8(q.double_quant() ? 1 : 0);
  if (q.dq) {
    w.u32(q.dq->group_size);
    w.f32(q.dq->offset);
    w.bytes(q.dq->codes.data(), q.dq->codes.size());
    for (float s : q.dq->scales) w.f32(s);
  } else {
    for (float a : q.absmax) w.f32(a);
  }
  w.bytes(q.packed.data(), q.packed.size());
}

Record read_record(Reader& r) {
  Record rec;
  const std::uint8_t tag = r.u8("dtype");
  if (tag > 1) r.error("unknown dtype tag " + std::to_string(tag));
  rec.dtype = static_cast<DType>(tag);
  const std::uint32_t rank = r.u32("rank");
  if (rank == 0 || rank > 8) r.error("implausible tensor rank " + std::to_string(rank));
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint32_t e = r.u32("extent");
    if (e == 0) r.error("zero tensor extent");
    rec.shape.push_back(e);
  }
  rec.requires_grad = r.u8("flags") & 1;
  const std::size_t n = numerics::shape_numel(rec.shape);
  if (rec.dtype == DType::kF32) {
    rec.values.resize(n);
    for (double& v : rec.values) v = static_cast<double>(r.f32("f32 payload"));
    return rec;
  }
  auto& q = rec.quantized;
  q.shape = rec.shape;
  q.block_size = r.u32("block size");
  if (q.block_size == 0) r.error("zero block size");
  const bool dq = r.u8("double-quant flag") != 0;
  const std::size_t blocks = q.num_blocks();
  if (dq) {
    quant::DoubleQuantMeta meta;
    meta.group_size = r.u32("double-quant group");
    if (meta.group_size == 0) r.error("zero double-quant group");
    meta.offset = r.f32("double-quant offset");
    meta.codes.resize(blocks);
    r.bytes(meta.codes.data(), blocks, "double-quant codes");
    meta.scales.resize((blocks + meta.group_size - 1) / meta.group_size);
    for (float& s : meta.scales) s = r.f32("double-quant scales");
    q.dq = std::move(meta);
  } else {
    q.absmax.resize(blocks);
    for (float& a : q.absmax) a = r.f32("block scales");
  }
  q.packed.resize((n + 1) / 2);
  r.bytes(q.packed.data(), q.packed.size(), "nibble payload");
  return rec;
}

numerics::Tensor to_tensor(Record& rec) {
  rec.used = true;
  return numerics::Tensor::from(rec.shape, std::move(rec.values), rec.requires_grad);
}

}  // namespace

std::string serialize_checkpoint(const TransformerModel& m, const nlohmann::json& metadata) {
  Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  const auto& c = m.config();
  w.u32(c.vocab_size);
  w.u32(c.d_model);
  w.u32(c.n_heads);
  w.u32(c.d_ff);
  w.u32(c.encoder_layers);
  w.u32(c.decoder_layers);
  w.u32(c.max_positions);
  w.f64(c.dropout);
  for (Pool pool : {Pool::kEncoder, Pool::kDecoder}) {
    const auto ids = m.layer_ids(pool);
    w.u32(ids.size());
    for (const auto& id : ids) w.u32(static_cast<std::uint32_t>(id.original_index));
  }
  w.str(metadata.dump());

  std::vector<std::pair<std::string, const Linear*>> adapted;
  std::size_t count = 0;
  m.for_each_tensor(TransformerModel::ConstTensorVisitor([&](const std::string&, const numerics::Tensor&) { ++count; }));
  m.for_each_linear(TransformerModel::ConstLinearVisitor([&](const std::string& name, const Linear& l) {
    if (l.quantized) ++count;
    if (l.adapter) {
      count += 2;
      adapted.emplace_back(name, &l);
    }
  }));
  w.u32(count);
  m.for_each_tensor(TransformerModel::ConstTensorVisitor(
      [&](const std::string& name, const numerics::Tensor& t) { write_f32(w, name, t); }));
  m.for_each_linear(TransformerModel::ConstLinearVisitor([&](const std::string& name, const Linear& l) {
    if (l.quantized) write_nf4(w, name + ".weight", *l.quantized);
  }));
  for (const auto& [name, l] : adapted) {
    write_f32(w, name + ".lora_down", l->adapter->down);
    write_f32(w, name + ".lora_up", l->adapter->up);
  }
  // Adapter manifest.
  w.u32(adapted.size());
  for (const auto& [name, l] : adapted) {
    w.str(name);
    w.u32(l->adapter->rank);
    w.f64(l->adapter->alpha);
    w.u8(l->adapter->rs_lora ? 1 : 0);
    w.f64(l->adapter->dropout);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) r.error("bad magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) r.error("unsupported version " + std::to_string(version));
  ModelConfig c;
  c.vocab_size = r.u32("vocab_size");
  c.d_model = r.u32("d_model");
  c.n_heads = r.u32("n_heads");
  c.d_ff = r.u32("d_ff");
  c.encoder_layers = r.u32("encoder_layers");
  c.decoder_layers = r.u32("decoder_layers");
  c.max_positions = r.u32("max_positions");
  c.dropout = r.f64("dropout");
  try {
    validate(c);
  } catch (const Error& e) {
    r.error(std::string("invalid config block (") + e.what() + ")");
  }
  std::vector<int> ids[2];
  for (auto& v : ids) {
    const std::uint32_t n = r.u32("layer count");
    if (n > 100000) r.error("implausible layer count");
    for (std::uint32_t i = 0; i < n; ++i) v.push_back(static_cast<int>(r.u32("layer id")));
  }
  Checkpoint ck;
  const std::string meta = r.str("metadata");
  try {
    ck.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception&) {
    r.error("metadata is not valid JSON");
  }

  std::map<std::string, Record> table;
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str("tensor name");
    Record rec = read_record(r);
    if (!table.emplace(std::move(name), std::move(rec)).second) r.error("duplicate tensor name");
  }

  try {
    ck.model = TransformerModel::skeleton(c, ids[0], ids[1]);
  } catch (const Error& e) {
    r.error(e.what());
  }
  TransformerModel& m = ck.model;
  auto find = [&](const std::string& name) -> Record& {
    auto it = table.find(name);
    if (it == table.end()) r.error("missing tensor " + name);
    return it->second;
  };
  auto check_shape = [&](const std::string& name, const Record& rec, const numerics::Shape& want) {
    if (rec.shape != want) {
      r.error("tensor " + name + " has shape " + numerics::shape_str(rec.shape) + ", expected " +
              numerics::shape_str(want));
    }
  };
  m.mutate_linears(TransformerModel::LinearVisitor([&](const std::string& name, Linear& l) {
    Record& rec = find(name + ".weight");
    check_shape(name + ".weight", rec, {l.out_dim, l.in_dim});
    if (rec.dtype == DType::kNf4Packed) {
      try {
        rec.quantized.validate();
      } catch (const Error& e) {
        r.error(e.what());
      }
      l.quantized = std::move(rec.quantized);
      l.weight = {};
      rec.used = true;
    }
  }));
  m.mutate_tensors(TransformerModel::TensorVisitor([&](const std::string& name, numerics::Tensor& t) {
    Record& rec = find(name);
    if (rec.dtype != DType::kF32) r.error("tensor " + name + " must be f32");
    check_shape(name, rec, t.shape());
    t = to_tensor(rec);
  }));

  const std::uint32_t adapters = r.u32("adapter count");
  std::map<std::string, lora::LoraAdapter> manifest;
  for (std::uint32_t i = 0; i < adapters; ++i) {
    std::string name = r.str("adapter target");
    lora::LoraAdapter a;
    a.rank = r.u32("adapter rank");
    a.alpha = r.f64("adapter alpha");
    a.rs_lora = r.u8("adapter rs flag") != 0;
    a.dropout = r.f64("adapter dropout");
    if (a.rank == 0) r.error("adapter rank is zero");
    a.scale = lora::lora_scale(a.rank, a.alpha, a.rs_lora);
    manifest.emplace(std::move(name), std::move(a));
  }
  m.mutate_linears(TransformerModel::LinearVisitor([&](const std::string& name, Linear& l) {
    auto it = manifest.find(name);
    if (it == manifest.end()) return;
    lora::LoraAdapter a = std::move(it->second);
    Record& down = find(name + ".lora_down");
    Record& up = find(name + ".lora_up");
    check_shape(name + ".lora_down", down, {a.rank, l.in_dim});
    check_shape(name + ".lora_up", up, {l.out_dim, a.rank});
    a.down = to_tensor(down);
    a.up = to_tensor(up);
    l.adapter = std::move(a);
    manifest.erase(it);
  }));
  if (!manifest.empty()) r.error("adapter manifest names unknown target " + manifest.begin()->first);
  for (const auto& [name, rec] : table) {
    if (!rec.used) r.error("unexpected tensor " + name);
  }
  if (!r.at_end()) r.error("trailing bytes");
  return ck;
}

void save_checkpoint(const TransformerModel& m, const std::string& path, const nlohmann::json& metadata) {
  const std::string bytes = serialize_checkpoint(m, metadata);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::kIo, "cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(ErrorKind::kIo, "failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace prunekit::model
