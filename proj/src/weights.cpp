#include "mnv2/weights.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "mnv2/error.hpp"

namespace mnv2 {
namespace {

constexpr char kMagic[4] = {'M', 'N', 'V', '2'};

class ByteWriter {
public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const void* data, std::size_t n) {
    auto p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

private:
  void put(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t uint(int width) {
    need(width);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += width;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("archive truncated in header");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

float read_f32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(v);
}

std::vector<std::uint32_t> conv_dims(std::size_t cout, std::size_t cin_per_group, std::size_t k) {
  return {static_cast<std::uint32_t>(cout), static_cast<std::uint32_t>(cin_per_group),
          static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k)};
}

void add_conv(std::vector<ExpectedTensor>& out, const std::string& prefix, std::size_t cin,
              std::size_t cout, std::size_t k, std::size_t groups) {
  out.push_back({prefix + ".w", conv_dims(cout, cin / groups, k)});
  const std::vector<std::uint32_t> vec{static_cast<std::uint32_t>(cout)};
  for (const char* suffix : {".bn_gamma", ".bn_beta", ".bn_mean", ".bn_var"}) {
    out.push_back({prefix + suffix, vec});
  }
}

std::string dims_string(const std::vector<std::uint32_t>& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

const ArchiveTensor& checked(const WeightArchive& a, const std::string& name,
                             const std::vector<std::uint32_t>& dims) {
  const ArchiveTensor& t = a.at(name);
  if (t.dims != dims) {
    throw ShapeError("tensor " + name + " has shape " + dims_string(t.dims) + ", expected " +
                     dims_string(dims));
  }
  return t;
}

ConvLayer load_conv(const WeightArchive& a, const std::string& prefix, const ConvLayer& shape,
                    float eps) {
  const Shape& ws = shape.weight.shape();
  const std::vector<std::uint32_t> vec{static_cast<std::uint32_t>(ws.n)};
  const ArchiveTensor& w = checked(a, prefix + ".w", conv_dims(ws.n, ws.c, ws.h));
  const ArchiveTensor& gamma = checked(a, prefix + ".bn_gamma", vec);
  const ArchiveTensor& beta = checked(a, prefix + ".bn_beta", vec);
  const ArchiveTensor& mean = checked(a, prefix + ".bn_mean", vec);
  const ArchiveTensor& var = checked(a, prefix + ".bn_var", vec);
  FoldedConv folded = fold_batchnorm(Tensor(ws, w.values), {}, gamma.values, beta.values,
                                     mean.values, var.values, eps);
  ConvLayer layer = shape;
  layer.weight = std::move(folded.weight);
  layer.bias = std::move(folded.bias);
  return layer;
}

float archive_eps(const WeightArchive& a) {
  auto it = a.tensors.find(kBnEpsName);
  if (it == a.tensors.end()) return kDefaultBnEps;
  if (it->second.values.size() != 1) throw ShapeError("bn_eps must hold exactly one value");
  const float eps = it->second.values[0];
  if (!(eps >= 0.0f) || !std::isfinite(eps)) throw ShapeError("bn_eps must be finite and >= 0");
  return eps;
}

} // namespace

std::size_t ArchiveTensor::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

const ArchiveTensor& WeightArchive::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw MissingTensorError(name);
  return it->second;
}

ArchiveTensor make_archive_tensor(const Tensor& t) {
  const Shape& s = t.shape();
  return ArchiveTensor{{static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                        static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)},
                       t.values()};
}

ArchiveTensor make_archive_tensor(const Matrix& m) {
  return ArchiveTensor{{static_cast<std::uint32_t>(m.rows), static_cast<std::uint32_t>(m.cols)},
                       m.data};
}

ArchiveTensor make_archive_tensor(std::span<const float> v) {
  return ArchiveTensor{{static_cast<std::uint32_t>(v.size())}, {v.begin(), v.end()}};
}

ArchiveTensor make_archive_scalar(float v) { return ArchiveTensor{{}, {v}}; }

Tensor to_tensor(const ArchiveTensor& t) {
  if (t.dims.size() > 4) throw ShapeError("to_tensor: more than four dims");
  std::size_t d[4] = {1, 1, 1, 1};
  const std::size_t lead = 4 - t.dims.size();
  for (std::size_t i = 0; i < t.dims.size(); ++i) d[lead + i] = t.dims[i];
  return Tensor(Shape{d[0], d[1], d[2], d[3]}, t.values);
}

std::vector<std::uint8_t> write_archive(const TensorMap& tensors) {
  std::size_t header = 12;
  for (const auto& [name, t] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw FormatError("tensor name too long: " + name.substr(0, 32) + "...");
    }
    if (t.dims.size() > std::numeric_limits<std::uint8_t>::max()) {
      throw FormatError("too many dims in " + name);
    }
    if (t.values.size() != t.element_count()) {
      throw ShapeError("tensor " + name + " holds " + std::to_string(t.values.size()) +
                       " values for shape " + dims_string(t.dims));
    }
    header += 2 + name.size() + 1 + 4 * t.dims.size() + 8;
  }

  ByteWriter w;
  w.raw(kMagic, 4);
  w.u32(kArchiveVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  std::uint64_t offset = header;
  for (const auto& [name, t] : tensors) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name.data(), name.size());
    w.u8(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) w.u32(d);
    w.u64(offset);
    offset += 4 * t.values.size();
  }
  for (const auto& entry : tensors) {
    for (float v : entry.second.values) w.f32(v);
  }
  return w.take();
}

WeightArchive read_archive(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin())) {
    throw FormatError("bad magic: not an MNV2 archive");
  }
  r.str(4);
  WeightArchive archive;
  archive.version = static_cast<std::uint32_t>(r.uint(4));
  if (archive.version != kArchiveVersion) {
    throw FormatError("unsupported archive version " + std::to_string(archive.version));
  }
  const auto count = static_cast<std::uint32_t>(r.uint(4));

  struct Record {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::uint64_t offset;
    std::uint64_t bytes;
  };
  std::vector<Record> records;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    Record rec;
    const auto name_len = static_cast<std::size_t>(r.uint(2));
    rec.name = r.str(name_len);
    if (rec.name.empty()) throw FormatError("empty tensor name in record " + std::to_string(i));
    if (!seen.insert(rec.name).second) throw FormatError("duplicate tensor name: " + rec.name);
    const auto ndim = static_cast<std::size_t>(r.uint(1));
    std::uint64_t elements = 1;
    for (std::size_t d = 0; d < ndim; ++d) {
      const auto dim = static_cast<std::uint32_t>(r.uint(4));
      rec.dims.push_back(dim);
      if (dim != 0 && elements > std::numeric_limits<std::uint64_t>::max() / 4 / dim) {
        throw FormatError("dimension overflow in tensor " + rec.name);
      }
      elements *= dim;
    }
    rec.offset = r.uint(8);
    rec.bytes = elements * 4;
    records.push_back(std::move(rec));
  }

  const std::uint64_t header_end = r.pos();
  const std::uint64_t file_size = bytes.size();
  for (const Record& rec : records) {
    if (rec.bytes > 0 && rec.offset < header_end) {
      throw FormatError("payload of " + rec.name + " overlaps the header");
    }
    if (rec.offset > file_size || rec.bytes > file_size - rec.offset) {
      throw FormatError("truncated payload for tensor " + rec.name);
    }
  }
  std::vector<const Record*> by_offset;
  for (const Record& rec : records) {
    if (rec.bytes > 0) by_offset.push_back(&rec);
  }
  std::sort(by_offset.begin(), by_offset.end(),
            [](const Record* a, const Record* b) { return a->offset < b->offset; });
  for (std::size_t i = 1; i < by_offset.size(); ++i) {
    if (by_offset[i - 1]->offset + by_offset[i - 1]->bytes > by_offset[i]->offset) {
      throw FormatError("overlapping payloads: " + by_offset[i - 1]->name + " and " +
                        by_offset[i]->name);
    }
  }

  for (Record& rec : records) {
    ArchiveTensor t;
    t.dims = std::move(rec.dims);
    t.values.resize(rec.bytes / 4);
    const std::uint8_t* src = bytes.data() + rec.offset;
    for (std::size_t k = 0; k < t.values.size(); ++k) t.values[k] = read_f32(src + 4 * k);
    archive.tensors.emplace(std::move(rec.name), std::move(t));
  }
  return archive;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

WeightArchive load_archive_file(const std::filesystem::path& path) {
  return read_archive(read_file_bytes(path));
}

void save_archive_file(const std::filesystem::path& path, const TensorMap& tensors) {
  write_file_bytes(path, write_archive(tensors));
}

std::vector<ExpectedTensor> expected_backbone_tensors() {
  std::vector<ExpectedTensor> out;
  add_conv(out, "stem.conv", kInputChannels, kStemChannels, 3, 1);
  const auto geometries = block_geometries();
  for (std::size_t i = 0; i < geometries.size(); ++i) {
    const BlockGeometry& g = geometries[i];
    const std::string prefix = "block" + std::to_string(i);
    if (g.expansion != 1) add_conv(out, prefix + ".expand", g.in_channels, g.hidden(), 1, 1);
    add_conv(out, prefix + ".dw", g.hidden(), g.hidden(), 3, g.hidden());
    add_conv(out, prefix + ".project", g.hidden(), g.out_channels, 1, 1);
  }
  add_conv(out, "head.conv", kBlockSpecs.back().channels, kFeatureChannels, 1, 1);
  return out;
}

ArchiveReport validate_topology(const WeightArchive& archive) {
  ArchiveReport report;
  report.tensor_count = archive.tensors.size();
  std::set<std::string> known;
  for (const ExpectedTensor& e : expected_backbone_tensors()) {
    checked(archive, e.name, e.dims);
    known.insert(e.name);
    ++report.backbone_tensors;
  }
  known.insert({kClassifierWeight, kClassifierBias, kBnEpsName});
  for (const auto& entry : archive.tensors) {
    if (!known.count(entry.first)) throw FormatError("unexpected tensor: " + entry.first);
  }
  report.bn_eps = archive_eps(archive);

  const bool has_w = archive.contains(kClassifierWeight);
  const bool has_b = archive.contains(kClassifierBias);
  if (has_w != has_b) {
    throw MissingTensorError(has_w ? kClassifierBias : kClassifierWeight);
  }
  if (has_w) {
    const ArchiveTensor& w = archive.at(kClassifierWeight);
    const ArchiveTensor& b = archive.at(kClassifierBias);
    if (w.dims.size() != 2 || w.dims[1] != kFeatureChannels || b.dims.size() != 1 ||
        b.dims[0] != w.dims[0]) {
      throw ShapeError("classifier shapes " + dims_string(w.dims) + " / " + dims_string(b.dims) +
                       " are not [k,1280] / [k]");
    }
    report.head_classes = w.dims[0];
  }
  return report;
}

Model load_model(const WeightArchive& archive, std::size_t num_classes, std::uint64_t head_seed) {
  const ArchiveReport report = validate_topology(archive);
  const float eps = report.bn_eps;
  Model m = build_mobilenetv2(num_classes);
  m.stem = load_conv(archive, "stem.conv", m.stem, eps);
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    InvertedResidual& b = m.blocks[i];
    const std::string prefix = "block" + std::to_string(i);
    if (b.expand) b.expand = load_conv(archive, prefix + ".expand", *b.expand, eps);
    b.depthwise = load_conv(archive, prefix + ".dw", b.depthwise, eps);
    b.project = load_conv(archive, prefix + ".project", b.project, eps);
  }
  m.head = load_conv(archive, "head.conv", m.head, eps);
  if (report.head_classes == num_classes) {
    m.classifier = read_classifier(archive);
  } else {
    m.classifier = init_classifier(num_classes, head_seed);
  }
  return m;
}

TensorMap synthetic_archive(std::size_t num_classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TensorMap out;
  for (const ExpectedTensor& e : expected_backbone_tensors()) {
    ArchiveTensor t{e.dims, std::vector<float>(ArchiveTensor{e.dims, {}}.element_count())};
    const std::string& n = e.name;
    auto ends_with = [&n](const char* s) {
      const std::string suffix(s);
      return n.size() >= suffix.size() && n.compare(n.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".w")) {
      const double fan_in = static_cast<double>(e.dims[1]) * e.dims[2] * e.dims[3];
      std::normal_distribution<float> dist(0.0f, static_cast<float>(std::sqrt(2.0 / fan_in)));
      for (float& v : t.values) v = dist(rng);
    } else if (ends_with(".bn_gamma")) {
      std::uniform_real_distribution<float> dist(0.8f, 1.2f);
      for (float& v : t.values) v = dist(rng);
    } else if (ends_with(".bn_var")) {
      std::uniform_real_distribution<float> dist(0.5f, 1.5f);
      for (float& v : t.values) v = dist(rng);
    } else {
      std::uniform_real_distribution<float> dist(-0.1f, 0.1f);
      for (float& v : t.values) v = dist(rng);
    }
    out.emplace(e.name, std::move(t));
  }
  const Classifier head = init_classifier(num_classes, seed ^ 0x9e3779b97f4a7c15ULL);
  out.merge(classifier_tensors(head));
  out.emplace(kBnEpsName, make_archive_scalar(kDefaultBnEps));
  return out;
}

TensorMap classifier_tensors(const Classifier& head) {
  TensorMap out;
  out.emplace(kClassifierWeight, make_archive_tensor(head.weight));
  out.emplace(kClassifierBias, make_archive_tensor(std::span<const float>(head.bias)));
  return out;
}

Classifier read_classifier(const WeightArchive& archive) {
  const ArchiveTensor& w = archive.at(kClassifierWeight);
  const ArchiveTensor& b = archive.at(kClassifierBias);
  if (w.dims.size() != 2 || w.dims[1] != kFeatureChannels || b.dims.size() != 1 ||
      b.dims[0] != w.dims[0]) {
    throw ShapeError("classifier shapes " + dims_string(w.dims) + " / " + dims_string(b.dims) +
                     " are not [k,1280] / [k]");
  }
  Classifier c;
  c.weight = Matrix(w.dims[0], w.dims[1], w.values);
  c.bias = b.values;
  return c;
}

} // namespace mnv2
