#ifndef DCSPLIT_PROBLEMS_IMAGE_HPP
#define DCSPLIT_PROBLEMS_IMAGE_HPP

// Grayscale images (PGM P2/P5, CSV grids), synthetic test images and
// segmentation metrics.

#include "dcsplit/linops.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcsplit {

/// Row-major intensities in [0, 1].
struct Image
{
    int width = 0;
    int height = 0;
    std::vector<double> pixels;

    double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return pixels.size(); }
};

using Mask = std::vector<std::uint8_t>;

class ImageError : public std::runtime_error
{
  public:
    explicit ImageError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void skip_pgm_space(std::istream& in)
{
    for (;;)
    {
        const int c = in.peek();
        if (c == '#')
        {
            std::string line;
            std::getline(in, line);
        }
        else if (std::isspace(c))
            in.get();
        else
            return;
    }
}

inline int read_pgm_int(std::istream& in)
{
    skip_pgm_space(in);
    int v = -1;
    if (!(in >> v))
        throw ImageError("malformed PGM header");
    return v;
}

} // namespace detail

inline Image read_pgm(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ImageError("cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P2" && magic != "P5")
        throw ImageError(path + ": not a P2/P5 PGM file");
    Image img;
    img.width = detail::read_pgm_int(in);
    img.height = detail::read_pgm_int(in);
    const int maxval = detail::read_pgm_int(in);
    if (img.width <= 0 || img.height <= 0 || maxval <= 0 || maxval > 65535)
        throw ImageError(path + ": invalid PGM dimensions");
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    img.pixels.resize(n);
    if (magic == "P2")
    {
        for (std::size_t i = 0; i < n; ++i)
            img.pixels[i] = static_cast<double>(detail::read_pgm_int(in)) / maxval;
    }
    else
    {
        in.get();
        const int bytes = maxval < 256 ? 1 : 2;
        for (std::size_t i = 0; i < n; ++i)
        {
            int v = 0;
            for (int b = 0; b < bytes; ++b)
            {
                const int c = in.get();
                if (c == EOF)
                    throw ImageError(path + ": truncated PGM data");
                v = (v << 8) | c;
            }
            img.pixels[i] = static_cast<double>(v) / maxval;
        }
    }
    return img;
}

/// CSV grid, one image row per line.
inline Image read_csv_grid(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ImageError("cannot open " + path);
    Image img;
    std::string line;
    while (std::getline(in, line))
    {
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        std::stringstream ss(line);
        std::string cell;
        int count = 0;
        while (std::getline(ss, cell, ','))
        {
            try
            {
                img.pixels.push_back(std::stod(cell));
            }
            catch (const std::exception&)
            {
                throw ImageError(path + ": bad CSV value '" + cell + "'");
            }
            ++count;
        }
        if (img.height == 0)
            img.width = count;
        else if (count != img.width)
            throw ImageError(path + ": ragged CSV grid");
        ++img.height;
    }
    if (img.height == 0)
        throw ImageError(path + ": empty CSV grid");
    return img;
}

/// PGM or CSV chosen by extension.
inline Image read_image(const std::string& path)
{
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv")
        return read_csv_grid(path);
    return read_pgm(path);
}

inline void write_pgm(const std::string& path, const Image& img)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ImageError("cannot write " + path);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    for (double v : img.pixels)
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
}

inline void write_mask_pgm(const std::string& path, const Mask& mask, int width, int height)
{
    Image img{width, height, std::vector<double>(mask.size())};
    for (std::size_t i = 0; i < mask.size(); ++i)
        img.pixels[i] = mask[i] ? 1.0 : 0.0;
    write_pgm(path, img);
}

struct SyntheticImage
{
    Image image;
    Mask truth;
};

/// Two bright disks on a dark background plus Gaussian noise (clamped to [0, 1]).
inline SyntheticImage synthetic_two_region(int width = 64, int height = 64, double noise = 0.1,
                                           std::uint64_t seed = 1)
{
    SyntheticImage out;
    out.image.width = width;
    out.image.height = height;
    out.image.pixels.resize(static_cast<std::size_t>(width) * height);
    out.truth.resize(out.image.pixels.size());
    const double r1 = 0.22 * std::min(width, height);
    const double r2 = 0.16 * std::min(width, height);
    const double cx1 = 0.32 * width, cy1 = 0.35 * height;
    const double cx2 = 0.70 * width, cy2 = 0.66 * height;
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, noise);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
        {
            const double px = x + 0.5, py = y + 0.5;
            const bool inside = std::hypot(px - cx1, py - cy1) <= r1 || std::hypot(px - cx2, py - cy2) <= r2;
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            out.truth[i] = inside ? 1 : 0;
            out.image.pixels[i] = std::clamp((inside ? 0.75 : 0.25) + normal(gen), 0.0, 1.0);
        }
    return out;
}

/// Prior labels: +1 / −1 / 0 (unlabeled).
using Labels = std::vector<int>;

/// Labels a `fraction` of each class of `truth`, chosen uniformly.
inline Labels sample_labels(const Mask& truth, double fraction, std::uint64_t seed)
{
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw StructuralError("label fraction must lie in (0, 1]");
    Labels labels(truth.size(), 0);
    std::mt19937_64 gen(seed);
    for (int cls : {1, 0})
    {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < truth.size(); ++i)
            if (static_cast<int>(truth[i]) == cls)
                idx.push_back(i);
        const std::size_t want = static_cast<std::size_t>(std::ceil(fraction * idx.size()));
        for (std::size_t i = 0; i < want && i < idx.size(); ++i)
        {
            std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
            std::swap(idx[i], idx[pick(gen)]);
            labels[idx[i]] = cls == 1 ? 1 : -1;
        }
    }
    return labels;
}

/// White (≥ 0.75) = +1, black (≤ 0.25) = −1, anything else unlabeled.
inline Labels labels_from_image(const Image& img)
{
    Labels labels(img.size(), 0);
    for (std::size_t i = 0; i < img.size(); ++i)
        labels[i] = img.pixels[i] >= 0.75 ? 1 : (img.pixels[i] <= 0.25 ? -1 : 0);
    return labels;
}

/// mask = (uᵢ > 0).
inline Mask threshold_seg(const Vector& u)
{
    Mask m(static_cast<std::size_t>(u.size()));
    for (Index i = 0; i < u.size(); ++i)
        m[static_cast<std::size_t>(i)] = u[i] > 0.0 ? 1 : 0;
    return m;
}

/// 2|X ∩ Y| / (|X| + |Y|).
inline double dice(const Mask& seg, const Mask& truth)
{
    if (seg.size() != truth.size())
        throw StructuralError("dice: mask sizes differ");
    std::size_t inter = 0, a = 0, b = 0;
    for (std::size_t i = 0; i < seg.size(); ++i)
    {
        a += seg[i] != 0;
        b += truth[i] != 0;
        inter += (seg[i] != 0) && (truth[i] != 0);
    }
    if (a + b == 0)
        throw StructuralError("dice: both masks are empty");
    return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

} // namespace dcsplit

#endif
