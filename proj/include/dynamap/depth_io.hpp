#pragma once

#include <dynamap/geometry.hpp>

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace dynamap {

// Depth images serialize as binary 16-bit PGM (P5, maxval 65535), one value
// per pixel in millimeters, 0 = invalid. PGM stores the most significant
// byte first. Intrinsics travel in a plain-text sidecar of "key value" lines.

inline void write_depth_pgm(const std::string& path, const DepthImage& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_depth_pgm: cannot open " + path);
    f << "P5\n" << img.intrinsics.width << " " << img.intrinsics.height << "\n65535\n";
    for (float d : img.data) {
        const long mm = std::lround(static_cast<double>(d) * 1000.0);
        const uint16_t v = static_cast<uint16_t>(std::clamp(mm, 0L, 65535L));
        const unsigned char bytes[2] = {static_cast<unsigned char>(v >> 8),
                                        static_cast<unsigned char>(v & 0xff)};
        f.write(reinterpret_cast<const char*>(bytes), 2);
    }
    if (!f) throw std::runtime_error("write_depth_pgm: write failed for " + path);
}

inline void write_depth_metadata(const std::string& path, const CameraIntrinsics& intr) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_depth_metadata: cannot open " + path);
    f << "fx " << intr.fx << "\n"
      << "fy " << intr.fy << "\n"
      << "cx " << intr.cx << "\n"
      << "cy " << intr.cy << "\n"
      << "width " << intr.width << "\n"
      << "height " << intr.height << "\n"
      << "depth_min " << intr.depth_min << "\n"
      << "depth_max " << intr.depth_max << "\n";
}

inline CameraIntrinsics read_depth_metadata(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_depth_metadata: cannot open " + path);
    std::map<std::string, double> kv;
    std::string key;
    double value;
    while (f >> key >> value) kv[key] = value;
    CameraIntrinsics intr;
    intr.fx = kv.at("fx");
    intr.fy = kv.at("fy");
    intr.cx = kv.at("cx");
    intr.cy = kv.at("cy");
    intr.width = static_cast<int>(kv.at("width"));
    intr.height = static_cast<int>(kv.at("height"));
    intr.depth_min = kv.at("depth_min");
    intr.depth_max = kv.at("depth_max");
    intr.validate();
    return intr;
}

inline DepthImage read_depth_pgm(const std::string& path, const CameraIntrinsics& intr) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_depth_pgm: cannot open " + path);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    f >> magic >> w >> h >> maxval;
    if (magic != "P5" || maxval != 65535)
        throw std::runtime_error("read_depth_pgm: not a 16-bit P5 file: " + path);
    if (w != intr.width || h != intr.height)
        throw std::runtime_error("read_depth_pgm: size mismatch with intrinsics");
    f.get();  // single whitespace after maxval
    DepthImage img = DepthImage::zeros(intr);
    for (size_t i = 0; i < img.data.size(); ++i) {
        unsigned char bytes[2];
        f.read(reinterpret_cast<char*>(bytes), 2);
        if (!f) throw std::runtime_error("read_depth_pgm: truncated file");
        const uint16_t mm = static_cast<uint16_t>((bytes[0] << 8) | bytes[1]);
        img.data[i] = static_cast<float>(mm) / 1000.0f;
    }
    return img;
}

}  // namespace dynamap
