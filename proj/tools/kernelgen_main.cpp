// SPDX-License-Identifier: Apache-2.0
// Build-time generator: writes the kernel sources, registry and manifest for a descriptor set.
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qigen/error.hpp"
#include "qigen/kernelgen.hpp"

int main(int argc, char** argv) {
  CLI::App app{"qigen kernel generator (build step)"};
  std::string out;
  std::vector<int> bits;
  std::vector<std::string> groups;
  std::vector<std::string> tiles;
  int lanes = 8;
  int vregs = 32;
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--bits", bits, "Bit widths")->delimiter(',')->required();
  app.add_option("--groups", groups, "Groupings: fc or a group size")->delimiter(',')->required();
  app.add_option("--tiles", tiles, "Register tiles as MUxTU")->delimiter(',')->required();
  app.add_option("--lanes", lanes, "Vector lanes");
  app.add_option("--vregs", vregs, "Register budget used to validate tiles");
  CLI11_PARSE(app, argc, argv);

  try {
    std::vector<qigen::KernelDescriptor> descs;
    for (int b : bits) {
      for (const auto& g : groups) {
        const std::size_t group = g == "fc" ? qigen::kFullColumn : std::stoul(g);
        for (const auto& t : tiles) {
          const auto x = t.find('x');
          if (x == std::string::npos) throw qigen::ConfigError("bad tile '" + t + "'");
          descs.push_back(qigen::make_descriptor(b, group, std::stoi(t.substr(0, x)), std::stoi(t.substr(x + 1)),
                                                 lanes, vregs));
        }
      }
    }
    qigen::write_kernel_set(descs, out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "qigen-kernelgen: %s\n", e.what());
    return 2;
  }
  return 0;
}
