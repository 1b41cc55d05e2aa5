#pragma once

#include "stn/training.hpp"

namespace test {

inline stn::ParameterStore fresh_store(stn::Variant v, std::uint64_t seed = 1) {
  stn::ParameterStore store = stn::ParameterStore::create(v);
  stn::glorot_init(store, seed);
  return store;
}

}  // namespace test
