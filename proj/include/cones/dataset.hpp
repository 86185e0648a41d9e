#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "cones/config.hpp"
#include "cones/phantom.hpp"
#include "cones/tensor_io.hpp"

namespace cones {

// Dataset directory layout:
//   <root>/manifest.txt
//   <root>/<split>/<index>/src_<c>.cnsf, tgt_<c>.cnsf, mask.cnsf
// Train indices are 0..n_train-1, validation continues at n_train, so the
// split is a pure function of the seed and index ranges.

struct DatasetInfo {
  PhantomSpec spec;
  long n_train = 200;
  long n_val = 40;
};

inline KeyValues dataset_manifest(const DatasetInfo& info) {
  KeyValues kv;
  kv.set("kind", "dataset");
  kv.set_long("size", info.spec.size);
  kv.set_long("n_source", info.spec.n_source);
  kv.set_long("n_target", info.spec.n_target);
  kv.set_long("min_lesions", info.spec.min_lesions);
  kv.set_long("max_lesions", info.spec.max_lesions);
  kv.set_double("texture_amplitude", info.spec.texture_amplitude);
  kv.set_double("lesion_contrast", info.spec.lesion_contrast);
  kv.set_long("seed", static_cast<long long>(info.spec.seed));
  kv.set_long("train", info.n_train);
  kv.set_long("val", info.n_val);
  return kv;
}

inline DatasetInfo read_dataset_manifest(const std::string& root) {
  KeyValues kv = KeyValues::parse_file(root + "/manifest.txt");
  const std::string kind = kv.get("kind");
  require(kind == "dataset", "dataset: '", root, "' is a ", kind, " manifest");
  DatasetInfo info;
  info.spec.size = kv.get_long("size");
  info.spec.n_source = kv.get_long("n_source");
  info.spec.n_target = kv.get_long("n_target");
  info.spec.min_lesions = static_cast<int>(kv.get_long("min_lesions"));
  info.spec.max_lesions = static_cast<int>(kv.get_long("max_lesions"));
  info.spec.texture_amplitude = kv.get_double("texture_amplitude");
  info.spec.lesion_contrast = kv.get_double("lesion_contrast");
  info.spec.seed = static_cast<std::uint64_t>(kv.get_long("seed"));
  info.n_train = kv.get_long("train");
  info.n_val = kv.get_long("val");
  kv.fail_on_unconsumed("dataset manifest");
  return info;
}

template <typename S>
void write_sample(const std::string& dir, const PairedSample<S>& sample) {
  std::filesystem::create_directories(dir);
  for (Index c = 0; c < sample.source.dim(0); ++c) {
    Tensor<S> ch = Tensor<S>::zeros({sample.source.dim(1), sample.source.dim(2)});
    std::copy(sample.source.data() + c * ch.numel(),
              sample.source.data() + (c + 1) * ch.numel(), ch.data());
    write_tensor(dir + "/src_" + std::to_string(c) + ".cnsf", ch);
  }
  for (Index c = 0; c < sample.target.dim(0); ++c) {
    Tensor<S> ch = Tensor<S>::zeros({sample.target.dim(1), sample.target.dim(2)});
    std::copy(sample.target.data() + c * ch.numel(),
              sample.target.data() + (c + 1) * ch.numel(), ch.data());
    write_tensor(dir + "/tgt_" + std::to_string(c) + ".cnsf", ch);
  }
  write_tensor(dir + "/mask.cnsf", sample.mask);
}

template <typename S>
PairedSample<S> load_sample(const std::string& dir, Index n_source, Index n_target) {
  PairedSample<S> sample;
  std::vector<Tensor<S>> src, tgt;
  for (Index c = 0; c < n_source; ++c)
    src.push_back(read_tensor<S>(dir + "/src_" + std::to_string(c) + ".cnsf"));
  for (Index c = 0; c < n_target; ++c)
    tgt.push_back(read_tensor<S>(dir + "/tgt_" + std::to_string(c) + ".cnsf"));
  sample.mask = read_tensor<S>(dir + "/mask.cnsf");
  const Index h = src[0].dim(0), w = src[0].dim(1);
  sample.source = Tensor<S>::zeros({n_source, h, w});
  sample.target = Tensor<S>::zeros({n_target, h, w});
  for (Index c = 0; c < n_source; ++c) {
    require(src[c].shape() == src[0].shape(), "dataset: channel shapes differ in ", dir);
    std::copy(src[c].data(), src[c].data() + h * w, sample.source.data() + c * h * w);
  }
  for (Index c = 0; c < n_target; ++c)
    std::copy(tgt[c].data(), tgt[c].data() + h * w, sample.target.data() + c * h * w);
  return sample;
}

/// Generates and writes the full dataset; regeneration from the same info is
/// bit-identical.
template <typename S>
void write_dataset(const std::string& root, const DatasetInfo& info) {
  std::filesystem::create_directories(root);
  dataset_manifest(info).save_file(root + "/manifest.txt");
  for (long i = 0; i < info.n_train + info.n_val; ++i) {
    const bool train = i < info.n_train;
    const std::string dir =
        root + (train ? "/train/" : "/val/") + std::to_string(train ? i : i - info.n_train);
    write_sample(dir, generate_phantom<S>(info.spec, i));
  }
}

inline std::vector<std::string> list_sample_dirs(const std::string& root,
                                                 const std::string& split) {
  namespace fs = std::filesystem;
  const fs::path base = fs::path(root) / split;
  require(fs::is_directory(base), "dataset: no '", split, "' split under ", root);
  std::vector<std::pair<long, std::string>> found;
  for (const auto& entry : fs::directory_iterator(base)) {
    if (!entry.is_directory()) continue;
    try {
      found.emplace_back(std::stol(entry.path().filename().string()), entry.path().string());
    } catch (...) {
      // non-numeric directories are not samples
    }
  }
  std::sort(found.begin(), found.end());
  std::vector<std::string> dirs;
  for (auto& [idx, dir] : found) dirs.push_back(dir);
  require(!dirs.empty(), "dataset: split '", split, "' under ", root, " is empty");
  return dirs;
}

template <typename S>
std::vector<PairedSample<S>> load_split(const std::string& root, const std::string& split) {
  const DatasetInfo info = read_dataset_manifest(root);
  std::vector<PairedSample<S>> out;
  for (const auto& dir : list_sample_dirs(root, split))
    out.push_back(load_sample<S>(dir, info.spec.n_source, info.spec.n_target));
  return out;
}

}  // namespace cones
