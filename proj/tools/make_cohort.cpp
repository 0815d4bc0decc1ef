// Writes the frozen cohort and the built-in protocols as JSON.
#include "gpbolus/app.hpp"
#include "gpbolus/io.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  using namespace gpbolus;
  CLI::App cli{"Generate the virtual-patient cohort and protocol files"};
  std::string dir = "data";
  std::uint64_t seed = app::kCohortSeed;
  cli.add_option("--dir", dir, "Output directory")->capture_default_str();
  cli.add_option("--seed", seed, "Cohort seed")->capture_default_str();
  CLI11_PARSE(cli, argc, argv);

  try {
    const std::filesystem::path out = dir;
    const auto cohort = sim::generate_cohort(seed);
    io::write_text_file(out / "cohort.json", io::to_json(cohort, seed).dump(2) + "\n");
    io::write_text_file(out / "protocol_collection.json", io::to_json(sim::collection_protocol()).dump(2) + "\n");
    io::write_text_file(out / "protocol_a.json", io::to_json(sim::protocol_a()).dump(2) + "\n");
    io::write_text_file(out / "protocol_b.json", io::to_json(sim::protocol_b()).dump(2) + "\n");
    for (const auto& p : cohort)
      std::cout << p.id << " basal " << p.basal_u_per_h << " U/h, CR " << p.calculator.cr << " g/U, CF "
                << p.calculator.cf << " mg/dL/U\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
