#include "eadnet/image_io.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

namespace eadnet::img {

namespace {

// Reads one PNM header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in, const std::string& path) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    require<DataError>(c != EOF, path + ": truncated header");
    std::string tok;
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    return tok;
}

i64 parse_dim(const std::string& tok, const std::string& path, const char* what) {
    i64 v = 0;
    for (char ch : tok) {
        require<DataError>(ch >= '0' && ch <= '9',
                           path + ": non-numeric " + what + " field '" + tok + "'");
        v = v * 10 + (ch - '0');
        require<DataError>(v <= 1'000'000, path + ": implausible " + what + " " + tok);
    }
    require<DataError>(!tok.empty(), path + ": empty " + what + " field");
    return v;
}

}  // namespace

Tensor<float> read_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require<DataError>(in.good(), path + ": cannot open");
    const std::string magic = next_token(in, path);
    i64 channels;
    if (magic == "P6") channels = 3;
    else if (magic == "P5") channels = 1;
    else throw DataError(path + ": unsupported magic '" + magic + "' (want P5 or P6)");

    const i64 w = parse_dim(next_token(in, path), path, "width");
    const i64 h = parse_dim(next_token(in, path), path, "height");
    const i64 maxval = parse_dim(next_token(in, path), path, "maxval");
    require<DataError>(w >= 1 && h >= 1, path + ": degenerate size " + std::to_string(w) + "x" +
                                             std::to_string(h));
    require<DataError>(maxval == 255,
                       path + ": maxval " + std::to_string(maxval) + " unsupported (want 255)");
    // exactly one whitespace byte separates header and payload; next_token
    // already consumed it as the token terminator

    const i64 count = channels * h * w;
    std::vector<unsigned char> raw(static_cast<size_t>(count));
    in.read(reinterpret_cast<char*>(raw.data()), count);
    require<DataError>(in.gcount() == count,
                       path + ": truncated payload (" + std::to_string(in.gcount()) + " of " +
                           std::to_string(count) + " bytes)");

    // interleaved bytes -> planar [C,H,W]
    Tensor<float> t({channels, h, w});
    for (i64 y = 0; y < h; ++y)
        for (i64 x = 0; x < w; ++x)
            for (i64 c = 0; c < channels; ++c)
                t.data[static_cast<size_t>((c * h + y) * w + x)] =
                    static_cast<float>(raw[static_cast<size_t>((y * w + x) * channels + c)]) / 255.0f;
    return t;
}

void write_image(const std::string& path, const Tensor<float>& t) {
    require<ShapeError>(t.rank() == 3 && (t.dim(0) == 1 || t.dim(0) == 3),
                        "write_image: want [1,H,W] or [3,H,W], got " + shape_str(t.shape));
    const i64 c = t.dim(0), h = t.dim(1), w = t.dim(2);
    std::ofstream out(path, std::ios::binary);
    require<DataError>(out.good(), path + ": cannot open for writing");
    out << (c == 3 ? "P6" : "P5") << "\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> raw(static_cast<size_t>(c * h * w));
    for (i64 y = 0; y < h; ++y)
        for (i64 x = 0; x < w; ++x)
            for (i64 ci = 0; ci < c; ++ci) {
                float v = t.data[static_cast<size_t>((ci * h + y) * w + x)];
                v = std::min(1.0f, std::max(0.0f, v));
                raw[static_cast<size_t>((y * w + x) * c + ci)] =
                    static_cast<unsigned char>(std::floor(v * 255.0f + 0.5f));
            }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    require<DataError>(out.good(), path + ": write failed");
}

Tensor<float> to_gray(const Tensor<float>& t) {
    require<ShapeError>(t.rank() == 3 && (t.dim(0) == 1 || t.dim(0) == 3),
                        "to_gray: want [1,H,W] or [3,H,W], got " + shape_str(t.shape));
    const i64 h = t.dim(1), w = t.dim(2);
    Tensor<float> g({h, w});
    if (t.dim(0) == 1) {
        g.data = t.data;
        return g;
    }
    const float* r = t.ptr();
    const float* gr = t.ptr() + h * w;
    const float* b = t.ptr() + 2 * h * w;
    for (i64 i = 0; i < h * w; ++i)
        g.data[static_cast<size_t>(i)] = 0.299f * r[i] + 0.587f * gr[i] + 0.114f * b[i];
    return g;
}

}  // namespace eadnet::img
