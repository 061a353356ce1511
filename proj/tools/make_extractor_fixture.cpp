// Regenerates the bundled test-profile feature extractor.
//   make_extractor_fixture <out.hfa> [seed]

#include <cstdlib>
#include <iostream>

#include "haifit/extractor.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: make_extractor_fixture <out.hfa> [seed]\n";
    return 2;
  }
  const std::uint64_t seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 20240601u;
  const auto e = haifit::FeatureExtractor<float>::random(haifit::FeatureExtractor<float>::test_profile_layout(), seed);
  e.to_archive().save(argv[1]);
  std::cout << "wrote " << argv[1] << '\n';
  return 0;
}
