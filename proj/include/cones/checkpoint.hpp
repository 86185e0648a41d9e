#pragma once

#include <filesystem>
#include <string>

#include "cones/config.hpp"
#include "cones/discriminator.hpp"
#include "cones/generator.hpp"
#include "cones/tensor_io.hpp"

namespace cones {

// Checkpoints are a plain-text descriptor (checkpoint.txt) plus one raw
// tensor file per parameter, named after the parameter.

inline GeneratorConfig generator_config_from(const KeyValues& kv) {
  GeneratorConfig cfg;
  cfg.mode = conditioning_mode_from(kv.get("mode"));
  cfg.use_intensity = kv.get_bool("use_intensity");
  cfg.encoding.m = static_cast<int>(kv.get_long("encoding_m"));
  cfg.encoding.include_raw = kv.get_bool("encoding_include_raw");
  cfg.n_source = static_cast<int>(kv.get_long("n_source"));
  cfg.n_target = static_cast<int>(kv.get_long("n_target"));
  cfg.mlp_hidden = parse_int_list(kv.get("mlp_hidden"));
  cfg.hypernet.blocks_per_stage = parse_int_list(kv.get("hyper_blocks"));
  cfg.hypernet.stage_widths = parse_int_list(kv.get("hyper_widths"));
  cfg.hypernet.fusion_width = static_cast<int>(kv.get_long("hyper_fusion"));
  cfg.hypernet.use_instance_norm = kv.get_bool("hyper_instance_norm");
  return cfg;
}

inline void generator_config_into(const GeneratorConfig& cfg, KeyValues& kv) {
  kv.set("mode", to_string(cfg.mode));
  kv.set_bool("use_intensity", cfg.use_intensity);
  kv.set_long("encoding_m", cfg.encoding.m);
  kv.set_bool("encoding_include_raw", cfg.encoding.include_raw);
  kv.set_long("n_source", cfg.n_source);
  kv.set_long("n_target", cfg.n_target);
  kv.set("mlp_hidden", format_int_list(cfg.mlp_hidden));
  kv.set("hyper_blocks", format_int_list(cfg.hypernet.blocks_per_stage));
  kv.set("hyper_widths", format_int_list(cfg.hypernet.stage_widths));
  kv.set_long("hyper_fusion", cfg.hypernet.fusion_width);
  kv.set_bool("hyper_instance_norm", cfg.hypernet.use_instance_norm);
}

template <typename S>
void save_generator(const std::string& dir, GeneratorParams<S>& gen,
                    const GeneratorConfig& cfg) {
  std::filesystem::create_directories(dir);
  KeyValues kv;
  kv.set("kind", "generator");
  generator_config_into(cfg, kv);
  kv.save_file(dir + "/checkpoint.txt");
  for (auto& p : gen.parameters()) write_tensor(dir + "/" + p.name + ".cnsf", p.tensor);
}

template <typename S>
GeneratorParams<S> load_generator(const std::string& dir, GeneratorConfig* cfg_out = nullptr) {
  KeyValues kv = KeyValues::parse_file(dir + "/checkpoint.txt");
  require(kv.get("kind") == "generator", "checkpoint: '", dir, "' is not a generator");
  GeneratorConfig cfg = generator_config_from(kv);
  kv.fail_on_unconsumed("generator checkpoint");
  Rng rng(0);  // placeholder init, every saved tensor is loaded over it
  GeneratorParams<S> gen = make_generator<S>(cfg, rng);
  for (auto& p : gen.parameters()) {
    Tensor<S> loaded = read_tensor<S>(dir + "/" + p.name + ".cnsf");
    require(loaded.shape() == p.tensor.shape(), "checkpoint: parameter '", p.name,
            "' has shape ", shape_str(loaded.shape()), ", expected ",
            shape_str(p.tensor.shape()));
    std::copy(loaded.data(), loaded.data() + loaded.numel(), p.tensor.data());
  }
  if (cfg_out) *cfg_out = cfg;
  return gen;
}

template <typename S>
void save_discriminator(const std::string& dir, DiscriminatorParams<S>& disc) {
  std::filesystem::create_directories(dir);
  KeyValues kv;
  kv.set("kind", "discriminator");
  kv.set_long("n_candidate", disc.n_candidate);
  kv.set_long("n_condition", disc.n_condition);
  std::vector<int> filters;
  for (auto& blk : disc.blocks) filters.push_back(static_cast<int>(blk.w.dim(0)));
  kv.set("filters", format_int_list(filters));
  kv.save_file(dir + "/checkpoint.txt");
  for (auto& p : disc.parameters()) write_tensor(dir + "/" + p.name + ".cnsf", p.tensor);
}

template <typename S>
DiscriminatorParams<S> load_discriminator(const std::string& dir) {
  KeyValues kv = KeyValues::parse_file(dir + "/checkpoint.txt");
  require(kv.get("kind") == "discriminator", "checkpoint: '", dir,
          "' is not a discriminator");
  const Index n_candidate = kv.get_long("n_candidate");
  const Index n_condition = kv.get_long("n_condition");
  std::vector<int> filters = parse_int_list(kv.get("filters"));
  kv.fail_on_unconsumed("discriminator checkpoint");
  Rng rng(0);
  DiscriminatorParams<S> disc = make_discriminator<S>(n_candidate, n_condition, rng, filters);
  for (auto& p : disc.parameters()) {
    Tensor<S> loaded = read_tensor<S>(dir + "/" + p.name + ".cnsf");
    require(loaded.shape() == p.tensor.shape(), "checkpoint: parameter '", p.name,
            "' has shape ", shape_str(loaded.shape()));
    std::copy(loaded.data(), loaded.data() + loaded.numel(), p.tensor.data());
  }
  return disc;
}

}  // namespace cones
