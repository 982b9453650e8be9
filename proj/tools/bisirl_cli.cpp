#include <CLI11.hpp>

#include "bisirl/bisirl_c.h"

int main(int argc, char** argv)
{
   CLI::App app{"Bilevel interactive IRL experiments"};
   app.require_subcommand(1);

   std::string config;
   int jobs = 1;
   double tol = 0.0;

   auto* run = app.add_subcommand("run", "Run the outer loop and baselines for every seed");
   run->add_option("config", config, "Experiment config (JSON)")->required();
   run->add_option("--jobs", jobs, "Seeds run in parallel")->check(CLI::PositiveNumber);

   auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference and SPSA derivative checks");
   gradcheck->add_option("config", config, "Experiment config (JSON)")->required();
   auto* tol_opt = gradcheck->add_option("--tol", tol, "Relative tolerance for the finite-difference checks")
                      ->check(CLI::PositiveNumber);

   auto* bench = app.add_subcommand("bench", "Time the analytical and SPSA hypergradients across horizons");
   bench->add_option("config", config, "Experiment config (JSON)")->required();
   bench->add_option("--jobs", jobs, "Horizons timed in parallel")->check(CLI::PositiveNumber);

   try {
      app.parse(argc, argv);
   } catch(const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? 0 : 2;
   }

   if(run->parsed()) {
      return bisirl_cmd_run(config.c_str(), jobs);
   }
   if(gradcheck->parsed()) {
      return bisirl_cmd_gradcheck(config.c_str(), tol_opt->count() > 0 ? 1 : 0, tol);
   }
   return bisirl_cmd_bench(config.c_str(), jobs);
}
