#pragma once

// Example models shipped with the library, in DSL form.

#include <map>
#include <string>
#include <string_view>

namespace tempo::dsl {

inline constexpr std::string_view doomsday_source = R"(package toy

model Doomsday {
  param RealVar rate
  random RealVar y
  random RealVar z
  laws {
    z | rate ~ Exponential(rate)
    y | z ~ ContinuousUniform(0.0, z)
  }
}
)";

inline constexpr std::string_view mixture_source = R"(package gmm

model MixtureModel {

  random List<RealVar>  y
  param  Integer        n  ?: y.size
  param  Matrix         a  ?: fixedVector(1.0, 1.0)
  random List<IntVar>   z  ?: latentIntList(n)

  param  Integer        K  ?: 2
  random Simplex        pi ?: latentSimplex(K)
  random List<RealVar>  mu ?: latentRealList(K)
  random List<RealVar>  sd ?: latentRealList(K)

  laws {

    pi | a ~ Dirichlet(a)

    for (int k : 0 ..< K) {
      mu.get(k) ~ Normal(0.0, 100.0)
      sd.get(k) ~ ContinuousUniform(0.0, 10.0)
    }

    for (int i : 0 ..< n) {
      z.get(i) | pi ~ Categorical(pi)
      y.get(i) | mu, sd, IntVar k = z.get(i)
        ~ Normal(mu.get(k), pow(sd.get(k), 2.0))
    }
  }
}
)";

inline constexpr std::string_view composite_source = R"(package perm

model CompositeModel {
  random List<RealVar> y ?: fixedRealList(2.1, -0.3, 0.8)
  random Permutation permutation ?: new Permutation(y.size)

  laws {
    permutation ~ UniformPermutation
    for (int i : 0 ..< y.size) {
      y.get(i) | permutation, i
        ~ Normal(permutation.getConnections.get(i), 0.3)
    }
  }
}
)";

// The original picks a row through an if/else block; blocks are outside the
// grammar, and an out-of-range row already makes the density zero here.
inline constexpr std::string_view markov_chain_source = R"(package others

model MarkovChain {

  param Simplex initialDistribution
  param TransitionMatrix transitionProbabilities
  random List<IntVar> chain

  laws {
    chain.get(0) | initialDistribution ~ Categorical(initialDistribution)

    for (int step : 1 ..< chain.size) {
      chain.get(step) | IntVar previous = chain.get(step - 1),
                        transitionProbabilities
        ~ Categorical(transitionProbabilities.row(previous))
    }
  }
}
)";

inline const std::map<std::string, std::string_view>& bundled_models() {
  static const std::map<std::string, std::string_view> m = {
      {"Doomsday", doomsday_source},
      {"MixtureModel", mixture_source},
      {"CompositeModel", composite_source},
      {"MarkovChain", markov_chain_source},
  };
  return m;
}

}  // namespace tempo::dsl
