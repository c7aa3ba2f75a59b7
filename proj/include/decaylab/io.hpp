#ifndef DECAYLAB_IO_HPP
#define DECAYLAB_IO_HPP

#include "decaylab/evolve.hpp"
#include "decaylab/labsim.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace decaylab::io
{
// Column-major numeric table with a header row.
struct CsvTable
{
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;

    std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
    // Throws ValidationError when the column is missing.
    const std::vector<double> &column(const std::string &name) const;
};

// Numbers are written in shortest round-trip form ("nan", "inf" allowed).
void write_csv(std::ostream &out, const CsvTable &table);
// Errors carry the 1-based line number.
CsvTable read_csv(std::istream &in);

CsvTable trace_table(const SurvivalTrace &trace);            // t_mm,p,re_a,im_a
SurvivalTrace trace_from_table(const CsvTable &table);       // accepts t_mm,p[,re_a,im_a]
CsvTable profile_table(const labsim::HdrProfile &profile);   // t_mm,p,sigma_p,sigma_t

// Writes via a sibling temporary file and a rename.
void write_file_atomic(const std::filesystem::path &path,
                       const std::function<void(std::ostream &)> &writer, bool binary = false);

CsvTable read_csv_file(const std::filesystem::path &path);

} // namespace decaylab::io

#endif // DECAYLAB_IO_HPP
