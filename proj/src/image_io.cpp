#include "csg0/image_io.hpp"

#include "csg0/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

namespace csg0 {

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string header_token(std::istream& in) {
    std::string tok;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') {
                c = in.get();
            }
        } else if (std::isspace(c)) {
            if (!tok.empty()) {
                break;
            }
        } else {
            tok += static_cast<char>(c);
        }
        c = in.get();
    }
    return tok;
}

struct NetpbmHeader {
    std::size_t width = 0;
    std::size_t height = 0;
};

NetpbmHeader read_header(std::istream& in, const char* magic, const std::filesystem::path& path) {
    if (header_token(in) != magic) {
        throw ValidationError(path.string() + ": not a " + magic + " file");
    }
    NetpbmHeader h;
    try {
        h.width = std::stoul(header_token(in));
        h.height = std::stoul(header_token(in));
        if (std::stoul(header_token(in)) != 255) {
            throw ValidationError(path.string() + ": only maxval 255 is supported");
        }
    } catch (const std::logic_error&) {
        throw ValidationError(path.string() + ": malformed header");
    }
    return h;
}

unsigned char to_byte(double v) {
    const double c = std::clamp(v, -1.0, 1.0);
    return static_cast<unsigned char>(std::lround((c + 1.0) * 127.5));
}

} // namespace

void write_pgm(const std::filesystem::path& path, const SemanticMap& map) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ValidationError("cannot write " + path.string());
    }
    out << "P5\n" << map.width << ' ' << map.height << "\n255\n";
    for (int id : map.labels) {
        if (id < 0 || id > 255) {
            throw ValidationError("label " + std::to_string(id) + " does not fit a PGM byte");
        }
        out.put(static_cast<char>(id));
    }
}

SemanticMap read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open " + path.string());
    }
    const auto h = read_header(in, "P5", path);
    SemanticMap map(h.height, h.width);
    for (auto& v : map.labels) {
        const int c = in.get();
        if (c == EOF) {
            throw ValidationError(path.string() + ": truncated pixel data");
        }
        v = c;
    }
    return map;
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
    if (image.ndim() != 4 || image.dim(0) != 1 || image.dim(1) != 3) {
        throw DimensionError("write_ppm expects [1,3,H,W], got " + shape_str(image.shape()));
    }
    const std::size_t h = image.dim(2);
    const std::size_t w = image.dim(3);
    const auto d = image.data();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ValidationError("cannot write " + path.string());
    }
    out << "P6\n" << w << ' ' << h << "\n255\n";
    for (std::size_t p = 0; p < h * w; ++p) {
        for (std::size_t c = 0; c < 3; ++c) {
            out.put(static_cast<char>(to_byte(d[c * h * w + p])));
        }
    }
}

Tensor read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open " + path.string());
    }
    const auto h = read_header(in, "P6", path);
    const std::size_t plane = h.height * h.width;
    std::vector<double> v(3 * plane);
    for (std::size_t p = 0; p < plane; ++p) {
        for (std::size_t c = 0; c < 3; ++c) {
            const int b = in.get();
            if (b == EOF) {
                throw ValidationError(path.string() + ": truncated pixel data");
            }
            v[c * plane + p] = b / 127.5 - 1.0;
        }
    }
    return Tensor::from_data({1, 3, h.height, h.width}, std::move(v));
}

} // namespace csg0
