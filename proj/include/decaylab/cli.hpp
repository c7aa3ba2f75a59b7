#ifndef DECAYLAB_CLI_HPP
#define DECAYLAB_CLI_HPP

#include "decaylab/analysis.hpp"
#include "decaylab/labsim.hpp"
#include "decaylab/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace decaylab::cli
{
inline constexpr int kSchemaVersion = 1;

struct RunConfig
{
    std::string command; // simulate | analyze | labsim | report
    std::string preset;
    std::string params_file;
    std::map<std::string, double> param_values; // explicit kappa0, kappa, eps, q, q0

    double t_min = 0.0;
    double t_max = 90.0;
    double step = 0.1;
    double tol = 1e-10;

    labsim::LabConfig lab;
    analysis::AnalysisConfig analysis;

    std::string out_dir = ".";
    std::vector<std::string> formats{"csv", "json"};
    std::string trace_file; // analyze input

    bool wants(const std::string &format) const;
};

// section.key assignment; unknown keys and unparsable values throw
// ValidationError.
void apply_setting(RunConfig &config, const std::string &section, const std::string &key,
                   const std::string &value);
// INI file with the sections [run] [params] [grid] [lab] [analysis].
void load_config_file(RunConfig &config, const std::filesystem::path &path);
// Every key with its current value, loadable by load_config_file.
std::string dump_config(const RunConfig &config);
nlohmann::json config_json(const RunConfig &config);

// Preset, parameter file or [params] values; exactly one source.
ChainParams resolve_params(const RunConfig &config);

nlohmann::json regime_json(const analysis::RegimeFit &fit);
nlohmann::json params_json(const ChainParams &params);

struct RunResult
{
    std::vector<std::filesystem::path> files;
};

RunResult run_simulate(const RunConfig &config, std::ostream &log);
RunResult run_analyze(const RunConfig &config, std::ostream &log);
RunResult run_labsim(const RunConfig &config, std::ostream &log);
RunResult run_report(const RunConfig &config, std::ostream &log);

// Exit codes: 0 success, 1 usage or validation error, 2 numeric failure.
int main_entry(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

} // namespace decaylab::cli

#endif // DECAYLAB_CLI_HPP
