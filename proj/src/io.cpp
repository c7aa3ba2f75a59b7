#include "decaylab/io.hpp"

#include "decaylab/errors.hpp"
#include "decaylab/numfmt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace decaylab::io
{
namespace
{
std::vector<std::string_view> split_fields(std::string_view line)
{
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true)
    {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos)
        {
            fields.push_back(trim(line.substr(start)));
            return fields;
        }
        fields.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
}
} // namespace

const std::vector<double> &CsvTable::column(const std::string &name) const
{
    for (std::size_t i = 0; i < header.size(); ++i)
    {
        if (header[i] == name)
            return columns[i];
    }
    throw ValidationError("csv: missing column '" + name + "'");
}

void write_csv(std::ostream &out, const CsvTable &table)
{
    for (std::size_t i = 0; i < table.header.size(); ++i)
        out << (i ? "," : "") << table.header[i];
    out << '\n';
    for (std::size_t r = 0; r < table.rows(); ++r)
    {
        for (std::size_t c = 0; c < table.columns.size(); ++c)
            out << (c ? "," : "") << format_double(table.columns[c][r]);
        out << '\n';
    }
}

CsvTable read_csv(std::istream &in)
{
    CsvTable table;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line))
    {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (trim(line).empty())
            continue;
        const auto fields = split_fields(line);
        if (table.header.empty())
        {
            for (auto f : fields)
            {
                if (f.empty())
                    throw ValidationError("csv line " + std::to_string(line_no) + ": empty column name");
                table.header.emplace_back(f);
            }
            table.columns.resize(table.header.size());
            continue;
        }
        if (fields.size() != table.header.size())
        {
            std::ostringstream msg;
            msg << "csv line " << line_no << ": expected " << table.header.size() << " fields, found "
                << fields.size();
            throw ValidationError(msg.str());
        }
        for (std::size_t c = 0; c < fields.size(); ++c)
        {
            try
            {
                table.columns[c].push_back(parse_double(fields[c], table.header[c]));
            }
            catch (const ValidationError &e)
            {
                throw ValidationError("csv line " + std::to_string(line_no) + ": " + e.what());
            }
        }
    }
    if (table.header.empty())
        throw ValidationError("csv: no header line");
    return table;
}

CsvTable trace_table(const SurvivalTrace &trace)
{
    CsvTable table;
    table.header = {"t_mm", "p", "re_a", "im_a"};
    table.columns.resize(4);
    table.columns[0] = trace.t;
    table.columns[1] = trace.p;
    for (std::size_t i = 0; i < trace.t.size(); ++i)
    {
        const std::complex<double> a = i < trace.a.size() ? trace.a[i] : std::complex<double>(NAN, NAN);
        table.columns[2].push_back(a.real());
        table.columns[3].push_back(a.imag());
    }
    return table;
}

SurvivalTrace trace_from_table(const CsvTable &table)
{
    SurvivalTrace trace;
    trace.t = table.column("t_mm");
    trace.p = table.column("p");
    const bool has_amplitude = std::find(table.header.begin(), table.header.end(), "re_a") != table.header.end();
    if (has_amplitude)
    {
        const auto &re = table.column("re_a");
        const auto &im = table.column("im_a");
        bool any_nan = false;
        for (std::size_t i = 0; i < re.size(); ++i)
            any_nan = any_nan || std::isnan(re[i]) || std::isnan(im[i]);
        if (!any_nan)
        {
            for (std::size_t i = 0; i < re.size(); ++i)
                trace.a.emplace_back(re[i], im[i]);
        }
    }
    for (std::size_t i = 0; i < trace.t.size(); ++i)
    {
        if (!std::isfinite(trace.t[i]) || !std::isfinite(trace.p[i]))
            throw ValidationError("trace csv line " + std::to_string(i + 2) + ": t_mm and p must be finite");
        if (i > 0 && !(trace.t[i] > trace.t[i - 1]))
            throw ValidationError("trace csv line " + std::to_string(i + 2) +
                                  ": t_mm must be strictly increasing");
    }
    return trace;
}

CsvTable profile_table(const labsim::HdrProfile &profile)
{
    CsvTable table;
    table.header = {"t_mm", "p", "sigma_p", "sigma_t"};
    table.columns = {profile.t, profile.p, profile.sigma_p, profile.sigma_t};
    return table;
}

void write_file_atomic(const std::filesystem::path &path,
                       const std::function<void(std::ostream &)> &writer, bool binary)
{
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        const auto mode = std::ios::out | std::ios::trunc | (binary ? std::ios::binary : std::ios::openmode{});
        std::ofstream out(tmp, mode);
        if (!out)
            throw ValidationError("cannot open '" + tmp.string() + "' for writing");
        writer(out);
        out.flush();
        if (!out)
        {
            out.close();
            std::filesystem::remove(tmp);
            throw ValidationError("write to '" + tmp.string() + "' failed");
        }
    }
    std::filesystem::rename(tmp, path);
}

CsvTable read_csv_file(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError("cannot open '" + path.string() + "'");
    return read_csv(in);
}

} // namespace decaylab::io
