#ifndef DCSPLIT_TEST_ARTIFACTS_HPP
#define DCSPLIT_TEST_ARTIFACTS_HPP

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace artifacts {

inline std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

/// Drops the trailing field of every CSV line (the wall-time column).
inline std::string drop_last_column(const std::string& csv)
{
    std::istringstream in(csv);
    std::string line, out;
    while (std::getline(in, line))
        out += line.substr(0, line.rfind(',')) + "\n";
    return out;
}

/// Compares two output directories: JSON byte-for-byte except timing.json,
/// CSV without the wall-time column, everything else byte-for-byte.
inline bool same_outputs(const std::filesystem::path& a, const std::filesystem::path& b, std::string* why = nullptr)
{
    namespace fs = std::filesystem;
    int files = 0;
    for (const auto& entry : fs::directory_iterator(a))
    {
        const std::string name = entry.path().filename().string();
        if (name == "timing.json")
            continue;
        const fs::path other = b / name;
        if (!fs::exists(other))
        {
            if (why)
                *why = name + " missing";
            return false;
        }
        std::string x = slurp(entry.path()), y = slurp(other);
        if (entry.path().extension() == ".csv")
        {
            x = drop_last_column(x);
            y = drop_last_column(y);
        }
        if (x != y)
        {
            if (why)
                *why = name + " differs";
            return false;
        }
        ++files;
    }
    return files > 0;
}

} // namespace artifacts

#endif
