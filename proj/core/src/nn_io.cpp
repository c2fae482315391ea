#include <charconv>
#include <cstdio>
#include <string>

#include "sou/container.hpp"
#include "sou/error.hpp"
#include "sou/nn.hpp"

namespace sou::nn {
namespace {

std::string prefix(std::size_t i, const char* kind) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "L%02zu.%s", i, kind);
  return buf;
}

std::vector<std::uint32_t> dims32(std::initializer_list<std::size_t> d) {
  std::vector<std::uint32_t> out;
  for (auto v : d) out.push_back(static_cast<std::uint32_t>(v));
  return out;
}

// Entry names look like "L03.batchnorm.gamma"; returns (index, kind, field).
struct EntryName {
  std::size_t index;
  std::string kind;
  std::string field;
};

std::optional<EntryName> split_name(const std::string& name) {
  if (name.size() < 5 || name[0] != 'L') return std::nullopt;
  const auto dot1 = name.find('.');
  if (dot1 == std::string::npos) return std::nullopt;
  EntryName e{};
  const auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + dot1, e.index);
  if (ec != std::errc{} || ptr != name.data() + dot1) return std::nullopt;
  const auto dot2 = name.find('.', dot1 + 1);
  e.kind = name.substr(dot1 + 1, dot2 == std::string::npos ? std::string::npos : dot2 - dot1 - 1);
  if (dot2 != std::string::npos) e.field = name.substr(dot2 + 1);
  return e;
}

const ContainerEntry& field(const Container& c, std::size_t i, const char* kind, const char* f,
                            std::size_t expect_size) {
  const auto& e = c.at(prefix(i, kind) + "." + f);
  if (e.values.size() != expect_size) {
    throw IoError("model file: entry '" + e.name + "' has unexpected size");
  }
  return e;
}

std::size_t dim(const ContainerEntry& e, std::size_t k) {
  if (e.dims.size() <= k) throw IoError("model file: entry '" + e.name + "' has too few dims");
  return e.dims[k];
}

}  // namespace

void save_model(const ModelGraph& model, const std::filesystem::path& path) {
  if (model.mode != Mode::eval) throw ConfigError("save_model: model must be in eval mode");
  layer_shapes(model);
  Container c;
  std::vector<double> in(model.input_shape.begin(), model.input_shape.end());
  c.add("input_shape", DType::f64, dims32({in.size()}), in);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& layer = model.layers[i];
    if (const auto* L = std::get_if<Conv3x3>(&layer)) {
      const auto p = prefix(i, "conv3x3");
      c.add(p + ".weight", DType::f64, dims32({L->out_ch, L->in_ch, 3, 3}), L->weight);
      c.add(p + ".bias", DType::f64, dims32({L->out_ch}), L->bias);
    } else if (const auto* B = std::get_if<BatchNorm>(&layer)) {
      const auto p = prefix(i, "batchnorm");
      c.add(p + ".gamma", DType::f64, dims32({B->channels}), B->gamma);
      c.add(p + ".beta", DType::f64, dims32({B->channels}), B->beta);
      c.add(p + ".running_mean", DType::f64, dims32({B->channels}), B->running_mean);
      c.add(p + ".running_var", DType::f64, dims32({B->channels}), B->running_var);
      c.add_scalar(p + ".momentum", B->momentum);
      c.add_scalar(p + ".eps", B->eps);
    } else if (std::holds_alternative<ReLU>(layer)) {
      c.add(prefix(i, "relu"), DType::f64, dims32({0}), {});
    } else if (std::holds_alternative<MaxPool2x2>(layer)) {
      c.add(prefix(i, "maxpool2x2"), DType::f64, dims32({0}), {});
    } else if (const auto* D = std::get_if<Dropout>(&layer)) {
      c.add_scalar(prefix(i, "dropout") + ".p", D->p);
    } else if (std::holds_alternative<GlobalAvgPool>(layer)) {
      c.add(prefix(i, "globalavgpool"), DType::f64, dims32({0}), {});
    } else if (std::holds_alternative<Flatten>(layer)) {
      c.add(prefix(i, "flatten"), DType::f64, dims32({0}), {});
    } else if (const auto* F = std::get_if<Dense>(&layer)) {
      const auto p = prefix(i, "dense");
      c.add(p + ".weight", DType::f64, dims32({F->out_dim, F->in_dim}), F->weight);
      c.add(p + ".bias", DType::f64, dims32({F->out_dim}), F->bias);
    }
  }
  c.write(path);
}

ModelGraph load_model(const std::filesystem::path& path) {
  const Container c = Container::read(path);
  ModelGraph m;
  for (double v : c.at("input_shape").values) m.input_shape.push_back(static_cast<std::size_t>(v));

  // Layer kinds in index order, taken from the first entry of each layer.
  std::vector<std::string> kinds;
  for (const auto& e : c.entries()) {
    const auto name = split_name(e.name);
    if (!name) continue;
    if (name->index == kinds.size()) {
      kinds.push_back(name->kind);
    } else if (name->index > kinds.size() || kinds[name->index] != name->kind) {
      throw IoError("model file: unexpected entry '" + e.name + "'");
    }
  }

  for (std::size_t i = 0; i < kinds.size(); ++i) {
    const auto& k = kinds[i];
    if (k == "conv3x3") {
      const auto& w = c.at(prefix(i, "conv3x3") + ".weight");
      Conv3x3 L;
      L.out_ch = dim(w, 0);
      L.in_ch = dim(w, 1);
      L.weight = w.values;
      L.bias = field(c, i, "conv3x3", "bias", L.out_ch).values;
      m.layers.emplace_back(std::move(L));
    } else if (k == "batchnorm") {
      const auto& g = c.at(prefix(i, "batchnorm") + ".gamma");
      BatchNorm L;
      L.channels = g.values.size();
      L.gamma = g.values;
      L.beta = field(c, i, "batchnorm", "beta", L.channels).values;
      L.running_mean = field(c, i, "batchnorm", "running_mean", L.channels).values;
      L.running_var = field(c, i, "batchnorm", "running_var", L.channels).values;
      L.momentum = field(c, i, "batchnorm", "momentum", 1).values[0];
      L.eps = field(c, i, "batchnorm", "eps", 1).values[0];
      m.layers.emplace_back(std::move(L));
    } else if (k == "relu") {
      m.layers.emplace_back(ReLU{});
    } else if (k == "maxpool2x2") {
      m.layers.emplace_back(MaxPool2x2{});
    } else if (k == "dropout") {
      m.layers.emplace_back(Dropout{field(c, i, "dropout", "p", 1).values[0]});
    } else if (k == "globalavgpool") {
      m.layers.emplace_back(GlobalAvgPool{});
    } else if (k == "flatten") {
      m.layers.emplace_back(Flatten{});
    } else if (k == "dense") {
      const auto& w = c.at(prefix(i, "dense") + ".weight");
      Dense L;
      L.out_dim = dim(w, 0);
      L.in_dim = dim(w, 1);
      L.weight = w.values;
      L.bias = field(c, i, "dense", "bias", L.out_dim).values;
      m.layers.emplace_back(std::move(L));
    } else {
      throw IoError("model file: unknown layer kind '" + k + "'");
    }
  }
  try {
    layer_shapes(m);
  } catch (const ShapeError& e) {
    throw IoError(std::string("model file: inconsistent layers: ") + e.what());
  }
  m.mode = Mode::eval;
  return m;
}

}  // namespace sou::nn
