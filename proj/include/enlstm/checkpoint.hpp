#pragma once

// Ensemble checkpoints.
//
// Layout (all integers and doubles little-endian):
//
//   bytes 0..7    magic "ENLSTMCK"
//   u32           format version (kCheckpointVersion)
//   u64           header length n
//   n bytes       UTF-8 JSON header: spec, n_params, n_members, lambda,
//                 iteration, epoch, seeds, has_priors, batchnorm_dims, meta
//   f64[...]      members     (n_params x n_members, column-major)
//   f64[...]      priors      (same shape, only when has_priors)
//   f64[...]      prior_var   (n_params)
//   f64[...]      aux: for each member, for each batchnorm layer, mean then var
//
// `meta` is a free-form object the caller may use (stage targets, config echo).

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "enlstm/enrml.hpp"
#include "enlstm/error.hpp"
#include "enlstm/network.hpp"

namespace enlstm {

using Json = nlohmann::json;

inline constexpr char kCheckpointMagic[8] = {'E', 'N', 'L', 'S', 'T', 'M', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline Json to_json(const NetworkSpec& spec) {
  Json layers = Json::array();
  for (const auto& layer : spec.layers) {
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, LstmLayer>) layers.push_back({{"kind", "lstm"}, {"hidden", l.hidden}});
          else if constexpr (std::is_same_v<T, DenseLayer>)
            layers.push_back({{"kind", "dense"},
                              {"out", l.out},
                              {"activation", l.activation == Activation::tanh ? "tanh" : "linear"}});
          else if constexpr (std::is_same_v<T, BatchNormLayer>) layers.push_back({{"kind", "batchnorm"}, {"dim", l.dim}});
          else layers.push_back({{"kind", "dropout"}, {"rate", l.rate}});
        },
        layer);
  }
  return {{"input_dim", spec.input_dim}, {"output_dim", spec.output_dim}, {"layers", layers}};
}

inline NetworkSpec spec_from_json(const Json& j) {
  try {
    NetworkSpec spec;
    spec.input_dim = j.at("input_dim").get<std::size_t>();
    spec.output_dim = j.at("output_dim").get<std::size_t>();
    for (const auto& l : j.at("layers")) {
      const std::string kind = l.at("kind").get<std::string>();
      if (kind == "lstm") spec.layers.push_back(LstmLayer{l.at("hidden").get<std::size_t>()});
      else if (kind == "dense") {
        const std::string act = l.at("activation").get<std::string>();
        if (act != "tanh" && act != "linear") throw ParseError("unknown activation '" + act + "'");
        spec.layers.push_back(
            DenseLayer{l.at("out").get<std::size_t>(), act == "tanh" ? Activation::tanh : Activation::linear});
      } else if (kind == "batchnorm") spec.layers.push_back(BatchNormLayer{l.at("dim").get<std::size_t>()});
      else if (kind == "dropout") spec.layers.push_back(DropoutLayer{l.at("rate").get<double>()});
      else throw ParseError("unknown layer kind '" + kind + "'");
    }
    return spec;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("network spec: ") + e.what());
  }
}

namespace detail {

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError(std::string("checkpoint: truncated ") + what);
  return v;
}

inline void put_doubles(std::ostream& out, const double* p, std::size_t n) {
  out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

inline void get_doubles(std::istream& in, double* p, std::size_t n, const char* what) {
  in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw ParseError(std::string("checkpoint: truncated ") + what);
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const EnsembleState& st, const Json& meta = Json::object()) {
  const bool has_priors = st.priors.size() > 0;
  if (has_priors) st.validate();
  Json bn_dims = Json::array();
  for (const auto& layer : st.spec.layers)
    if (const auto* bn = std::get_if<BatchNormLayer>(&layer)) bn_dims.push_back(bn->dim);
  const Json header = {
      {"spec", to_json(st.spec)},
      {"n_params", st.n_params()},
      {"n_members", st.size()},
      {"lambda", st.lambda},
      {"iteration", st.iteration},
      {"epoch", st.epoch},
      {"seeds",
       {{"init", st.seeds.init},
        {"dropout", st.seeds.dropout},
        {"observation", st.seeds.observation},
        {"smoothing", st.seeds.smoothing},
        {"shuffle", st.seeds.shuffle}}},
      {"has_priors", has_priors},
      {"batchnorm_dims", bn_dims},
      {"meta", meta},
  };
  const std::string text = header.dump();
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  detail::put_doubles(out, st.members.data(), static_cast<std::size_t>(st.members.size()));
  if (has_priors) detail::put_doubles(out, st.priors.data(), static_cast<std::size_t>(st.priors.size()));
  detail::put_doubles(out, st.prior_var.data(), static_cast<std::size_t>(st.prior_var.size()));
  for (const auto& aux : st.aux)
    for (const auto& rs : aux.batchnorm) {
      detail::put_doubles(out, rs.mean.data(), static_cast<std::size_t>(rs.mean.size()));
      detail::put_doubles(out, rs.var.data(), static_cast<std::size_t>(rs.var.size()));
    }
  if (!out) throw Error("checkpoint: write failed");
}

struct Checkpoint {
  EnsembleState state;
  Json meta;
};

inline Checkpoint read_checkpoint(std::istream& in) {
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) throw ParseError("checkpoint: bad magic");
  const auto version = detail::get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion)
    throw ParseError("checkpoint: unsupported format version " + std::to_string(version));
  const auto len = detail::get<std::uint64_t>(in, "header length");
  if (len > (std::uint64_t{1} << 30)) throw ParseError("checkpoint: implausible header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ParseError("checkpoint: truncated header");

  Checkpoint ck;
  EnsembleState& st = ck.state;
  std::vector<std::size_t> bn_dims;
  bool has_priors = true;
  std::size_t n_m = 0;
  std::size_t n_e = 0;
  try {
    const Json h = Json::parse(text);
    st.spec = spec_from_json(h.at("spec"));
    n_m = h.at("n_params").get<std::size_t>();
    n_e = h.at("n_members").get<std::size_t>();
    st.lambda = h.at("lambda").get<double>();
    st.iteration = h.at("iteration").get<std::size_t>();
    st.epoch = h.at("epoch").get<std::size_t>();
    const Json& s = h.at("seeds");
    st.seeds = SeedStreams{s.at("init").get<std::uint64_t>(), s.at("dropout").get<std::uint64_t>(),
                           s.at("observation").get<std::uint64_t>(), s.at("smoothing").get<std::uint64_t>(),
                           s.at("shuffle").get<std::uint64_t>()};
    has_priors = h.at("has_priors").get<bool>();
    bn_dims = h.at("batchnorm_dims").get<std::vector<std::size_t>>();
    ck.meta = h.value("meta", Json::object());
  } catch (const Json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  if (n_m != param_count(st.spec)) throw ParseError("checkpoint: n_params does not match the stored spec");
  std::vector<std::size_t> expected_dims;
  for (const auto& rs : NetworkAux::initial(st.spec).batchnorm) expected_dims.push_back(static_cast<std::size_t>(rs.mean.size()));
  if (bn_dims != expected_dims) throw ParseError("checkpoint: batchnorm_dims do not match the stored spec");

  const auto rows = static_cast<Eigen::Index>(n_m);
  const auto cols = static_cast<Eigen::Index>(n_e);
  st.members.resize(rows, cols);
  detail::get_doubles(in, st.members.data(), n_m * n_e, "members");
  if (has_priors) {
    st.priors.resize(rows, cols);
    detail::get_doubles(in, st.priors.data(), n_m * n_e, "priors");
  }
  st.prior_var.resize(rows);
  detail::get_doubles(in, st.prior_var.data(), n_m, "prior_var");
  st.aux.assign(n_e, NetworkAux::initial(st.spec));
  for (auto& aux : st.aux)
    for (auto& rs : aux.batchnorm) {
      detail::get_doubles(in, rs.mean.data(), static_cast<std::size_t>(rs.mean.size()), "aux");
      detail::get_doubles(in, rs.var.data(), static_cast<std::size_t>(rs.var.size()), "aux");
    }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("checkpoint: trailing bytes");
  if (has_priors) {
    try {
      st.validate();
    } catch (const InvalidArgument& e) {
      throw ParseError(std::string("checkpoint: ") + e.what());
    }
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const EnsembleState& st,
                            const Json& meta = Json::object()) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  write_checkpoint(out, st, meta);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

}  // namespace enlstm
