#include "vlt/image_io.hpp"

#include <fstream>
#include <stdexcept>

namespace vlt {

namespace {

void skip_space_and_comments(std::istream& is) {
    int c = is.peek();
    while (c == '#' || std::isspace(c)) {
        if (c == '#') {
            std::string line;
            std::getline(is, line);
        } else {
            is.get();
        }
        c = is.peek();
    }
}

int read_header_int(std::istream& is) {
    skip_space_and_comments(is);
    int v = 0;
    if (!(is >> v)) throw std::runtime_error("image: malformed header");
    return v;
}

}  // namespace

void write_ppm(const std::string& path, const RgbImage& img) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("image: cannot open '" + path + "' for writing");
    os << "P6\n" << img.w << ' ' << img.h << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

RgbImage read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("image: cannot open '" + path + "'");
    std::string magic;
    is >> magic;
    if (magic != "P6") throw std::runtime_error("image: '" + path + "' is not a binary PPM");
    RgbImage img;
    img.w = read_header_int(is);
    img.h = read_header_int(is);
    const int maxval = read_header_int(is);
    if (maxval != 255) throw std::runtime_error("image: only 8-bit PPM supported");
    is.get();  // single whitespace after header
    img.pixels.resize(static_cast<std::size_t>(img.h) * img.w * 3);
    is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (!is) throw std::runtime_error("image: truncated PPM '" + path + "'");
    return img;
}

void write_pbm(const std::string& path, const ByteMask& mask) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("image: cannot open '" + path + "' for writing");
    os << "P4\n" << mask.w << ' ' << mask.h << "\n";
    const int row_bytes = (mask.w + 7) / 8;
    std::vector<unsigned char> row(static_cast<std::size_t>(row_bytes));
    for (int y = 0; y < mask.h; ++y) {
        std::fill(row.begin(), row.end(), 0);
        for (int x = 0; x < mask.w; ++x) {
            if (mask.pixels[static_cast<std::size_t>(y) * mask.w + static_cast<std::size_t>(x)]) {
                row[static_cast<std::size_t>(x / 8)] |= static_cast<unsigned char>(0x80u >> (x % 8));
            }
        }
        os.write(reinterpret_cast<const char*>(row.data()), row_bytes);
    }
}

ByteMask read_pbm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("image: cannot open '" + path + "'");
    std::string magic;
    is >> magic;
    if (magic != "P4") throw std::runtime_error("image: '" + path + "' is not a binary PBM");
    ByteMask mask;
    mask.w = read_header_int(is);
    mask.h = read_header_int(is);
    is.get();
    const int row_bytes = (mask.w + 7) / 8;
    std::vector<unsigned char> row(static_cast<std::size_t>(row_bytes));
    mask.pixels.assign(static_cast<std::size_t>(mask.h) * mask.w, 0);
    for (int y = 0; y < mask.h; ++y) {
        is.read(reinterpret_cast<char*>(row.data()), row_bytes);
        if (!is) throw std::runtime_error("image: truncated PBM '" + path + "'");
        for (int x = 0; x < mask.w; ++x) {
            mask.pixels[static_cast<std::size_t>(y) * mask.w + static_cast<std::size_t>(x)] =
                (row[static_cast<std::size_t>(x / 8)] >> (7 - x % 8)) & 1u;
        }
    }
    return mask;
}

void write_pgm(const std::string& path, int h, int w, const std::vector<unsigned char>& gray) {
    if (gray.size() != static_cast<std::size_t>(h) * w) throw std::invalid_argument("write_pgm: size mismatch");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("image: cannot open '" + path + "' for writing");
    os << "P5\n" << w << ' ' << h << "\n255\n";
    os.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
}

Tensor image_to_tensor(const RgbImage& img) {
    std::vector<double> v(img.pixels.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = img.pixels[i] / 255.0;
    return Tensor::from_data({img.h, img.w, 3}, std::move(v));
}

Tensor mask_to_tensor(const ByteMask& mask) {
    std::vector<double> v(mask.pixels.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = mask.pixels[i] ? 1.0 : 0.0;
    return Tensor::from_data({mask.h, mask.w}, std::move(v));
}

void write_raw_float32(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("image: cannot open '" + path + "' for writing");
    os << "dims";
    for (int i = 0; i < t.rank(); ++i) os << ' ' << t.dim(i);
    os << "\nendianness little\n";
    for (double v : t.values()) {
        const float f = static_cast<float>(v);
        os.write(reinterpret_cast<const char*>(&f), sizeof(float));
    }
}

}  // namespace vlt
