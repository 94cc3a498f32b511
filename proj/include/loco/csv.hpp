#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace loco
{

/** @brief Column-oriented CSV writer with round-trip-exact double formatting. */
class CsvWriter
{
public:
    CsvWriter() = default;

    CsvWriter(const std::string& path, const std::vector<std::string>& columns)
    {
        open(path, columns);
    }

    void open(const std::string& path, const std::vector<std::string>& columns)
    {
        m_stream.open(path);
        if (!m_stream)
        {
            throw std::runtime_error("cannot open " + path + " for writing");
        }
        m_columns = columns.size();
        for (std::size_t i = 0; i < columns.size(); ++i)
        {
            m_stream << (i == 0 ? "" : ",") << columns[i];
        }
        m_stream << "\n";
    }

    bool is_open() const { return m_stream.is_open(); }

    void row(const std::vector<double>& values)
    {
        if (values.size() != m_columns)
        {
            throw std::invalid_argument("csv row width mismatch");
        }
        char buf[32];
        for (std::size_t i = 0; i < values.size(); ++i)
        {
            std::snprintf(buf, sizeof(buf), "%.17g", values[i]);
            m_stream << (i == 0 ? "" : ",") << buf;
        }
        m_stream << "\n";
    }

    void flush() { m_stream.flush(); }

private:
    std::ofstream m_stream;
    std::size_t m_columns{0};
};

/** @brief Small CSV table held in memory, numeric cells only. */
struct CsvTable
{
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    int column_index(const std::string& name) const
    {
        for (std::size_t i = 0; i < columns.size(); ++i)
        {
            if (columns[i] == name)
            {
                return static_cast<int>(i);
            }
        }
        return -1;
    }

    std::vector<double> column(int idx) const
    {
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows)
        {
            out.push_back(r.at(static_cast<std::size_t>(idx)));
        }
        return out;
    }
};

inline CsvTable read_csv(const std::string& path)
{
    std::ifstream stream(path);
    if (!stream)
    {
        throw std::runtime_error("cannot open " + path);
    }
    CsvTable table;
    std::string line;
    bool header = true;
    std::size_t line_no = 0;
    while (std::getline(stream, line))
    {
        ++line_no;
        if (line.empty())
        {
            continue;
        }
        if (!line.empty() && line.back() == '\r')
        {
            line.pop_back();
        }
        std::stringstream ss(line);
        std::string cell;
        if (header)
        {
            while (std::getline(ss, cell, ','))
            {
                table.columns.push_back(cell);
            }
            header = false;
            continue;
        }
        std::vector<double> row;
        while (std::getline(ss, cell, ','))
        {
            try
            {
                row.push_back(std::stod(cell));
            }
            catch (const std::exception&)
            {
                throw std::runtime_error(path + ":" + std::to_string(line_no)
                                         + ": non-numeric cell '" + cell + "'");
            }
        }
        if (row.size() != table.columns.size())
        {
            throw std::runtime_error(path + ":" + std::to_string(line_no)
                                     + ": expected " + std::to_string(table.columns.size())
                                     + " cells, got " + std::to_string(row.size()));
        }
        table.rows.push_back(std::move(row));
    }
    if (table.columns.empty())
    {
        throw std::runtime_error(path + ": empty csv");
    }
    return table;
}

} // namespace loco
