#pragma once

#include <map>
#include <string>
#include <vector>

#include "lgvi/nn.hpp"

namespace lgvi::ckpt {

// Checkpoint format: <prefix>.json manifest (parameter name -> shape, dtype,
// byte offset) plus <prefix>.bin, one blob of little-endian 32-bit floats.
// Reload is bit-exact.

void save_tensors(const std::string& prefix,
                  const std::vector<std::pair<std::string, const Tensor<float>*>>& tensors);

std::map<std::string, Tensor<float>> load_tensors(const std::string& prefix);

void save_params(const std::string& prefix, const ParamStore<float>& ps);

// strict: every stored tensor must match a parameter and cover the store.
// Non-strict loads the intersection (used when fine-tuning adds new modules)
// and returns the number of parameters loaded.
int load_params(const std::string& prefix, ParamStore<float>& ps, bool strict = true);

bool exists(const std::string& prefix);

}  // namespace lgvi::ckpt
