#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvhet/errors.hpp"
#include "mvhet/mat.hpp"

namespace mvhet {

struct Param {
  std::string name;
  Mat value;
};

// Named learnable parameters in a stable insertion order; the order fixes
// both the Adam update sequence and checkpoint layout.
class ParamStore {
 public:
  int add(std::string name, Mat value) {
    if (index_.count(name))
      throw Error(ErrorKind::ConfigInvalid, "duplicate parameter " + name);
    int id = static_cast<int>(items_.size());
    index_.emplace(name, id);
    items_.push_back(Param{std::move(name), std::move(value)});
    return id;
  }

  int id_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw Error(ErrorKind::ConfigInvalid, "unknown parameter " + name);
    return it->second;
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  Mat& value(int id) { return items_[id].value; }
  const Mat& value(int id) const { return items_[id].value; }
  Mat& value(const std::string& name) { return items_[id_of(name)].value; }
  const Mat& value(const std::string& name) const { return items_[id_of(name)].value; }
  int size() const { return static_cast<int>(items_.size()); }
  const std::vector<Param>& items() const { return items_; }
  std::vector<Param>& items() { return items_; }

  std::vector<Mat> snapshot() const {
    std::vector<Mat> out;
    out.reserve(items_.size());
    for (const Param& p : items_) out.push_back(p.value);
    return out;
  }

  void restore(const std::vector<Mat>& snap) {
    for (std::size_t i = 0; i < items_.size(); ++i) items_[i].value = snap[i];
  }

 private:
  std::vector<Param> items_;
  std::unordered_map<std::string, int> index_;
};

struct AdamConfig {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::int64_t step = 0;
  std::vector<Mat> m;
  std::vector<Mat> v;
};

// One bias-corrected Adam update over all parameters. `grads` is aligned
// with the store's insertion order.
inline void adam_step(ParamStore& params, const std::vector<Mat>& grads, AdamState& state,
                      const AdamConfig& cfg) {
  if (static_cast<int>(grads.size()) != params.size())
    throw Error(ErrorKind::ShapeMismatch, "adam_step: gradient count mismatch");
  if (state.m.empty()) {
    for (const Param& p : params.items()) {
      state.m.emplace_back(p.value.rows(), p.value.cols());
      state.v.emplace_back(p.value.rows(), p.value.cols());
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (int p = 0; p < params.size(); ++p) {
    Mat& w = params.value(p);
    const Mat& g = grads[p];
    if (!w.same_shape(g))
      throw Error(ErrorKind::ShapeMismatch, "adam_step: gradient shape mismatch for " +
                                                params.items()[p].name);
    Mat& m = state.m[p];
    Mat& v = state.v[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.data()[i];
      m.data()[i] = cfg.beta1 * m.data()[i] + (1.0 - cfg.beta1) * gi;
      v.data()[i] = cfg.beta2 * v.data()[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mh = m.data()[i] / bc1;
      const double vh = v.data()[i] / bc2;
      w.data()[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
}

}  // namespace mvhet
