#pragma once

#include <cstdint>

#include <Eigen/Core>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

namespace oufield {

using Rng = boost::random::mt19937_64;

// Independent, reproducible stream for (seed, stream index). Streams are
// derived by splitmix64 mixing so neighbouring indices do not share state.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return Rng(mix(mix(seed) ^ mix(stream + 0x632be59bd9b4e019ULL)));
}

inline double standard_normal(Rng& rng) {
  boost::random::normal_distribution<double> dist;
  return dist(rng);
}

inline double uniform01(Rng& rng) {
  boost::random::uniform_01<double> dist;
  return dist(rng);
}

inline void fill_standard_normal(Rng& rng, Eigen::Ref<Eigen::VectorXd> out) {
  boost::random::normal_distribution<double> dist;
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = dist(rng);
}

}  // namespace oufield
