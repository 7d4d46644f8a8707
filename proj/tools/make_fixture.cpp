// Writes the synthetic 12-group evaluation fixture as grouped CSV.

#include <iostream>

#include "bsdesign/fixtures.hpp"
#include "bsdesign/io.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixture OUT.csv\n";
    return 2;
  }
  try {
    bsdesign::io::write_atomic(argv[1], bsdesign::io::render_grouped_csv(bsdesign::make_gradient_fixture()));
  } catch (const bsdesign::Error& e) {
    std::cerr << e.name() << ": " << e.what() << "\n";
    return 3;
  }
  return 0;
}
