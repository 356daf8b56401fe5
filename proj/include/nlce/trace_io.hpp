#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nlce/errors.hpp"
#include "nlce/matrix.hpp"
#include "nlce/toy_model.hpp"

namespace nlce {

// Trace export: a directory of flat float64 little-endian tensors plus a JSON
// manifest carrying shapes and layer names. PGM dumps are for visual
// inspection only and are not a contract surface.

inline void write_tensor(const std::filesystem::path& path, const Matrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write tensor file: " + path.string());
    static_assert(sizeof(double) == 8);
    out.write(reinterpret_cast<const char*>(m.data().data()),
              static_cast<std::streamsize>(m.data().size() * sizeof(double)));
}

inline Matrix read_tensor(const std::filesystem::path& path, std::size_t rows,
                          std::size_t cols) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read tensor file: " + path.string());
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data().data()),
            static_cast<std::streamsize>(rows * cols * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != rows * cols * sizeof(double))
        throw DataError("truncated tensor file: " + path.string());
    return m;
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path.string());
    out << j.dump(2) << "\n";
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return j;
}

// PGM (P2) with values scaled x255, rounded half-up. Used for gates (values
// in [0, 1]) and binary masks (0 -> 0, 1 -> 255).
inline void write_pgm(const std::filesystem::path& path, const Matrix& values) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write PGM file: " + path.string());
    out << "P2\n" << values.cols() << " " << values.rows() << "\n255\n";
    for (std::size_t i = 0; i < values.rows(); ++i) {
        for (std::size_t j = 0; j < values.cols(); ++j) {
            const int v = static_cast<int>(std::floor(values(i, j) * 255.0 + 0.5));
            out << std::clamp(v, 0, 255);
            out << (j + 1 == values.cols() ? "\n" : " ");
        }
    }
}

// Feature image PGM after per-channel min-max normalization, channels tiled
// horizontally.
inline void write_feature_pgm(const std::filesystem::path& path, const Matrix& feature,
                              std::size_t H, std::size_t W) {
    const std::size_t d = feature.cols();
    Matrix img(H, W * d);
    for (std::size_t c = 0; c < d; ++c) {
        double lo = feature(0, c), hi = feature(0, c);
        for (std::size_t p = 0; p < H * W; ++p) {
            lo = std::min(lo, feature(p, c));
            hi = std::max(hi, feature(p, c));
        }
        const double span = hi > lo ? hi - lo : 1.0;
        for (std::size_t p = 0; p < H * W; ++p)
            img(p / W, (p % W) + c * W) = (feature(p, c) - lo) / span;
    }
    write_pgm(path, img);
}

inline void export_trace(const std::filesystem::path& dir, const GenerationTrace& trace) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["dtype"] = "float64";
    manifest["metadata"] = trace.metadata;
    manifest["timesteps"] = trace.steps.size();
    auto steps = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
        const TimestepRecord& step = trace.steps[t];
        nlohmann::ordered_json sj;
        auto layers = nlohmann::ordered_json::array();
        for (const LayerRecord& layer : step.layers) {
            nlohmann::ordered_json lj;
            lj["name"] = layer.name;
            lj["H"] = layer.H;
            lj["W"] = layer.W;
            const std::string base = "t" + std::to_string(t) + "_" + layer.name;
            lj["latent"] = base + "_latent.bin";
            lj["latent_shape"] = {layer.latent.rows(), layer.latent.cols()};
            lj["attention"] = base + "_attn.bin";
            lj["attention_shape"] = {layer.attention.rows(), layer.attention.cols()};
            write_tensor(dir / (base + "_latent.bin"), layer.latent);
            write_tensor(dir / (base + "_attn.bin"), layer.attention);
            layers.push_back(lj);
        }
        sj["layers"] = layers;
        if (step.gate) {
            const std::string gname = "t" + std::to_string(t) + "_gate";
            sj["gate"] = gname + ".bin";
            sj["gate_source"] = step.gate->source_layer;
            write_tensor(dir / (gname + ".bin"), step.gate->values);
            write_pgm(dir / (gname + ".pgm"), step.gate->values);
        }
        auto masks = nlohmann::ordered_json::array();
        for (const BinaryMask& mask : step.masks) {
            const std::string mname =
                "t" + std::to_string(t) + "_" + mask.layer + "_mask";
            nlohmann::ordered_json mj;
            mj["layer"] = mask.layer;
            mj["file"] = mname + ".bin";
            mj["shape"] = {mask.values.rows(), mask.values.cols()};
            mj["delta_scrub"] = mask.delta_scrub;
            write_tensor(dir / (mname + ".bin"), mask.values);
            write_pgm(dir / (mname + ".pgm"), mask.values);
            masks.push_back(mj);
        }
        sj["masks"] = masks;
        steps.push_back(sj);
    }
    manifest["steps"] = steps;
    manifest["final_feature"] = "final_feature.bin";
    manifest["final_feature_shape"] = {trace.final_feature.rows(), trace.final_feature.cols()};
    write_tensor(dir / "final_feature.bin", trace.final_feature);
    write_feature_pgm(dir / "final_feature.pgm", trace.final_feature, 32, 32);
    write_json_file(dir / "manifest.json", manifest);
}

}  // namespace nlce
