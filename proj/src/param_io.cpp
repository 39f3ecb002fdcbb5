#include "rdn/param_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "rdn/error.hpp"

namespace rdn {

namespace {

enum BlockKind : std::uint64_t { kRelation = 1, kTransform = 2, kHead = 3 };

// Sanity bound on any single dimension read from disk.
constexpr std::uint64_t kMaxDim = 1u << 20;

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes.data(), 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void put_reals(std::ostream& out, std::span<const double> values) {
  for (double v : values) put_f64(out, v);
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), 8);
  if (!in) throw ValidationError("parameter container truncated");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[static_cast<std::size_t>(i)];
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

std::size_t get_dim(std::istream& in, const char* name) {
  const std::uint64_t v = get_u64(in);
  if (v > kMaxDim) {
    throw ValidationError(std::string("parameter container: implausible ") + name + " " +
                          std::to_string(v));
  }
  return static_cast<std::size_t>(v);
}

void get_reals(std::istream& in, std::span<double> values) {
  for (double& v : values) v = get_f64(in);
}

void expect_kind(std::istream& in, BlockKind kind) {
  const std::uint64_t got = get_u64(in);
  if (got != kind) {
    throw ValidationError("parameter container: expected block kind " + std::to_string(kind) +
                          ", found " + std::to_string(got));
  }
}

void write_transform(std::ostream& out, const AffineTransform& t) {
  put_u64(out, kTransform);
  put_u64(out, t.weight.rows());
  put_u64(out, t.activation == Activation::relu ? 1 : 0);
  put_reals(out, t.weight.data());
  put_reals(out, t.bias);
}

AffineTransform read_transform(std::istream& in) {
  expect_kind(in, kTransform);
  const std::size_t d = get_dim(in, "d_model");
  const std::uint64_t act = get_u64(in);
  if (act > 1) throw ValidationError("parameter container: unknown activation " + std::to_string(act));
  AffineTransform t{Matrix(d, d), std::vector<double>(d),
                    act == 1 ? Activation::relu : Activation::none};
  get_reals(in, t.weight.data());
  get_reals(in, t.bias);
  return t;
}

void write_head(std::ostream& out, const DetectionHeadParams& h) {
  put_u64(out, kHead);
  put_u64(out, h.d_model);
  put_u64(out, h.num_classes);
  put_reals(out, h.cls_weight.data());
  put_reals(out, h.cls_bias);
  put_reals(out, h.reg_weight.data());
  put_reals(out, h.reg_bias);
}

DetectionHeadParams read_head(std::istream& in) {
  expect_kind(in, kHead);
  const std::size_t d = get_dim(in, "d_model");
  const std::size_t c = get_dim(in, "num_classes");
  DetectionHeadParams h{d,          c, Matrix(d, c + 1), std::vector<double>(c + 1),
                        Matrix(d, 4 * c), std::vector<double>(4 * c)};
  get_reals(in, h.cls_weight.data());
  get_reals(in, h.cls_bias);
  get_reals(in, h.reg_weight.data());
  get_reals(in, h.reg_bias);
  h.validate();
  return h;
}

std::size_t relation_reals(const RelationDims& d) {
  return d.heads * (2 * d.d_model * d.d_k + d.d_model * d.d_rel + d.d_geo);
}

}  // namespace

void write_relation_block(std::ostream& out, const RelationModuleParams& params) {
  params.validate();
  const auto& d = params.dims;
  put_u64(out, kRelation);
  for (std::uint64_t v : {d.d_model, d.d_k, d.d_rel, d.d_geo, d.heads}) put_u64(out, v);
  put_u64(out, params.seed);
  for (const auto& h : params.heads) {
    put_reals(out, h.query.data());
    put_reals(out, h.key.data());
    put_reals(out, h.value.data());
    put_reals(out, h.geometry);
  }
}

RelationModuleParams read_relation_block(std::istream& in) {
  expect_kind(in, kRelation);
  RelationModuleParams p;
  p.dims.d_model = get_dim(in, "d_model");
  p.dims.d_k = get_dim(in, "d_k");
  p.dims.d_rel = get_dim(in, "d_rel");
  p.dims.d_geo = get_dim(in, "d_geo");
  p.dims.heads = get_dim(in, "heads");
  p.seed = get_u64(in);
  p.dims.validate();
  for (std::size_t m = 0; m < p.dims.heads; ++m) {
    RelationHeadParams h{Matrix(p.dims.d_model, p.dims.d_k), Matrix(p.dims.d_model, p.dims.d_k),
                         Matrix(p.dims.d_model, p.dims.d_rel), std::vector<double>(p.dims.d_geo)};
    get_reals(in, h.query.data());
    get_reals(in, h.key.data());
    get_reals(in, h.value.data());
    get_reals(in, h.geometry);
    p.heads.push_back(std::move(h));
  }
  p.validate();
  return p;
}

void write_model(std::ostream& out, const ModelParams& model) {
  model.validate();
  out.write(kParamMagic, sizeof kParamMagic);
  put_u64(out, 1);
  put_u64(out, model.basic.modules.size());
  put_f64(out, model.advanced.r_percent);
  for (const auto& m : model.basic.modules) write_relation_block(out, m);
  for (const auto& t : model.basic.transforms) write_transform(out, t);
  write_relation_block(out, model.advanced.pool_module);
  write_relation_block(out, model.advanced.distill_module);
  write_head(out, model.head);
}

ModelParams read_model(std::istream& in) {
  char magic[sizeof kParamMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kParamMagic, sizeof magic) != 0) {
    throw ValidationError("not a parameter container (bad magic)");
  }
  const std::uint64_t version = get_u64(in);
  if (version != 1) {
    throw ValidationError("unsupported parameter container version " + std::to_string(version));
  }
  const std::size_t num_basic = get_dim(in, "num_basic");
  if (num_basic == 0) throw ValidationError("parameter container has no basic-stage modules");
  ModelParams model;
  model.advanced.r_percent = get_f64(in);
  for (std::size_t k = 0; k < num_basic; ++k) model.basic.modules.push_back(read_relation_block(in));
  for (std::size_t k = 0; k + 1 < num_basic; ++k) model.basic.transforms.push_back(read_transform(in));
  model.advanced.pool_module = read_relation_block(in);
  model.advanced.distill_module = read_relation_block(in);
  model.head = read_head(in);
  model.validate();
  return model;
}

std::string model_manifest(const ModelParams& model) {
  std::ostringstream out;
  out << "# parameter container v1: little-endian u64 header fields, f64 payload\n";
  out << "# header: magic RDNPARM1, version, num_basic, r_percent (f64)\n";
  out << "num_basic " << model.basic.modules.size() << "\n";
  out << "r_percent " << model.advanced.r_percent << "\n";
  std::uint64_t offset = 8 + 8 + 8 + 8;
  auto relation = [&](const std::string& role, const RelationModuleParams& p) {
    const auto& d = p.dims;
    const std::size_t reals = relation_reals(d);
    out << "block relation role=" << role << " offset=" << offset << " d_model=" << d.d_model
        << " d_k=" << d.d_k << " d_rel=" << d.d_rel << " d_geo=" << d.d_geo
        << " heads=" << d.heads << " seed=" << p.seed << " reals=" << reals
        << " layout=per-head[W_Q,W_K,W_V,W_G]\n";
    offset += 8 * 7 + 8 * reals;
  };
  for (std::size_t k = 0; k < model.basic.modules.size(); ++k) {
    relation("basic[" + std::to_string(k) + "]", model.basic.modules[k]);
  }
  for (std::size_t k = 0; k < model.basic.transforms.size(); ++k) {
    const auto& t = model.basic.transforms[k];
    const std::size_t reals = t.weight.data().size() + t.bias.size();
    out << "block transform role=basic_transform[" << k << "] offset=" << offset
        << " d_model=" << t.weight.rows()
        << " activation=" << (t.activation == Activation::relu ? "relu" : "none")
        << " reals=" << reals << " layout=[W,b]\n";
    offset += 8 * 3 + 8 * reals;
  }
  relation("advanced_pool", model.advanced.pool_module);
  relation("advanced_distill", model.advanced.distill_module);
  const auto& h = model.head;
  const std::size_t reals = h.cls_weight.data().size() + h.cls_bias.size() +
                            h.reg_weight.data().size() + h.reg_bias.size();
  out << "block head role=detection_head offset=" << offset << " d_model=" << h.d_model
      << " num_classes=" << h.num_classes << " reals=" << reals
      << " layout=[W_cls,b_cls,W_reg,b_reg]\n";
  return out.str();
}

void save_model(const std::filesystem::path& path, const ModelParams& model) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    write_model(out, model);
    if (!out) throw IoError("failed writing " + path.string());
  }
  std::ofstream manifest(path.string() + ".manifest", std::ios::trunc);
  if (!manifest) throw IoError("cannot write " + path.string() + ".manifest");
  manifest << model_manifest(model);
}

ModelParams load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return read_model(in);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace rdn
