#pragma once

// File formats: binary PGM (P5, maxval 255), dataset directories with a JSON
// index, and plain CSV with shortest round-trip number formatting.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "tlosslab/datagen.hpp"
#include "tlosslab/grid.hpp"
#include "tlosslab/metrics.hpp"

namespace tlosslab {

namespace fs = std::filesystem;

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- numbers

/// Shortest decimal string that parses back to exactly `v`.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw IoError("not a number: '" + std::string(s) + "'");
    return v;
}

// ---------------------------------------------------------------- files

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string() + " for reading");
    return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(content.data(), std::streamsize(content.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------- PGM

inline std::string encode_pgm(const Grid<std::uint8_t>& img) {
    std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
    return out;
}

inline Grid<std::uint8_t> decode_pgm(std::string_view bytes, const std::string& what = "PGM") {
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_uint = [&]() -> std::size_t {
        skip_space();
        std::size_t v = 0;
        const auto res = std::from_chars(bytes.data() + pos, bytes.data() + bytes.size(), v);
        if (res.ec != std::errc{}) throw IoError(what + ": malformed header");
        pos = std::size_t(res.ptr - bytes.data());
        return v;
    };
    if (bytes.substr(0, 2) != "P5") throw IoError(what + ": not a binary PGM (P5)");
    pos = 2;
    const std::size_t w = read_uint(), h = read_uint(), maxval = read_uint();
    if (w == 0 || h == 0) throw IoError(what + ": zero dimension");
    if (maxval != 255) throw IoError(what + ": only maxval 255 is supported");
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
        throw IoError(what + ": malformed header");
    ++pos;
    if (bytes.size() - pos != w * h) throw IoError(what + ": pixel data size does not match header");
    Grid<std::uint8_t> img(w, h);
    std::copy(bytes.begin() + std::ptrdiff_t(pos), bytes.end(), img.data.begin());
    return img;
}

inline void write_pgm(const fs::path& path, const Grid<std::uint8_t>& img) { write_file(path, encode_pgm(img)); }

inline Grid<std::uint8_t> read_pgm(const fs::path& path) { return decode_pgm(read_file(path), path.string()); }

/// Masks are stored as 0/255 images.
inline Grid<std::uint8_t> mask_to_image(const Mask& m) {
    Grid<std::uint8_t> img(m.width, m.height);
    for (std::size_t i = 0; i < m.size(); ++i) img.data[i] = m.data[i] ? 255 : 0;
    return img;
}

/// Any pixel >= 128 is foreground.
inline Mask image_to_mask(const Grid<std::uint8_t>& img) {
    Mask m(img.width, img.height);
    for (std::size_t i = 0; i < img.size(); ++i) m.data[i] = img.data[i] >= 128 ? 1 : 0;
    return m;
}

inline Grid<std::uint8_t> quantize(const Grid<double>& g) {
    Grid<std::uint8_t> img(g.width, g.height);
    for (std::size_t i = 0; i < g.size(); ++i)
        img.data[i] = std::uint8_t(std::lround(std::clamp(g.data[i], 0.0, 1.0) * 255.0));
    return img;
}

inline Grid<double> dequantize(const Grid<std::uint8_t>& img) {
    Grid<double> g(img.width, img.height);
    for (std::size_t i = 0; i < img.size(); ++i) g.data[i] = img.data[i] / 255.0;
    return g;
}

// ---------------------------------------------------------------- datasets

// Layout:
//   index.json
//   train/0000/{image,mask,train_mask}.pgm
//   test/0000/{image,mask,train_mask}.pgm
// Images are quantized to 8 bits on export.

inline std::string sample_dir_name(std::size_t i) {
    std::string s = std::to_string(i);
    return std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

inline void write_sample(const fs::path& dir, const ImageSample& s) {
    write_pgm(dir / "image.pgm", quantize(s.features));
    write_pgm(dir / "mask.pgm", mask_to_image(s.clean_mask));
    write_pgm(dir / "train_mask.pgm", mask_to_image(s.train_mask));
}

inline ImageSample read_sample(const fs::path& dir) {
    ImageSample s;
    s.features = dequantize(read_pgm(dir / "image.pgm"));
    s.clean_mask = image_to_mask(read_pgm(dir / "mask.pgm"));
    const fs::path tm = dir / "train_mask.pgm";
    s.train_mask = fs::exists(tm) ? image_to_mask(read_pgm(tm)) : s.clean_mask;
    if (!s.clean_mask.same_shape(s.features) || !s.train_mask.same_shape(s.features))
        throw IoError(dir.string() + ": image and mask sizes differ");
    return s;
}

inline void export_dataset(const fs::path& root, const Dataset& ds, const nlohmann::ordered_json& meta = {}) {
    nlohmann::ordered_json index;
    index["format"] = "tlosslab-dataset-1";
    if (!meta.is_null()) index["meta"] = meta;
    for (const char* split : {"train", "test"}) {
        const auto& samples = std::string_view(split) == "train" ? ds.train : ds.test;
        nlohmann::ordered_json list = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const std::string rel = std::string(split) + "/" + sample_dir_name(i);
            write_sample(root / rel, samples[i]);
            list.push_back(rel);
        }
        index[split] = std::move(list);
    }
    write_file(root / "index.json", index.dump(2) + "\n");
}

inline Dataset import_dataset(const fs::path& root) {
    nlohmann::json index;
    try {
        index = nlohmann::json::parse(read_file(root / "index.json"));
    } catch (const nlohmann::json::exception& e) {
        throw IoError((root / "index.json").string() + ": " + e.what());
    }
    Dataset ds;
    for (const char* split : {"train", "test"}) {
        if (!index.contains(split) || !index[split].is_array())
            throw IoError((root / "index.json").string() + ": missing array '" + split + "'");
        auto& out = std::string_view(split) == "train" ? ds.train : ds.test;
        for (const auto& rel : index[split]) {
            if (!rel.is_string()) throw IoError((root / "index.json").string() + ": sample entries must be strings");
            out.push_back(read_sample(root / rel.get<std::string>()));
        }
    }
    return ds;
}

/// Overwrite only the train masks of an exported dataset.
inline void write_train_masks(const fs::path& root, std::span<const Mask> masks) {
    const auto index = nlohmann::json::parse(read_file(root / "index.json"));
    const auto& train = index.at("train");
    if (train.size() != masks.size()) throw IoError("train mask count does not match index.json");
    for (std::size_t i = 0; i < masks.size(); ++i)
        write_pgm(root / train[i].get<std::string>() / "train_mask.pgm", mask_to_image(masks[i]));
}

// ---------------------------------------------------------------- CSV

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw IoError("CSV has no column '" + std::string(name) + "'");
    }

    friend bool operator==(const CsvTable&, const CsvTable&) = default;
};

inline bool csv_needs_quotes(std::string_view f) { return f.find_first_of(",\"\n\r") != std::string_view::npos; }

inline void append_csv_field(std::string& out, std::string_view f) {
    if (!csv_needs_quotes(f)) {
        out += f;
        return;
    }
    out += '"';
    for (char c : f) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
}

inline std::string format_csv(const CsvTable& t) {
    std::string out;
    auto line = [&](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out += ',';
            append_csv_field(out, fields[i]);
        }
        out += '\n';
    };
    line(t.header);
    for (const auto& r : t.rows) {
        if (r.size() != t.header.size()) throw IoError("CSV row width does not match header");
        line(r);
    }
    return out;
}

inline CsvTable parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> rec;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        switch (c) {
            case '"': quoted = true; any = true; break;
            case ',': rec.push_back(std::move(field)); field.clear(); any = true; break;
            case '\r': break;
            case '\n':
                rec.push_back(std::move(field));
                field.clear();
                records.push_back(std::move(rec));
                rec.clear();
                any = false;
                break;
            default: field += c; any = true;
        }
    }
    if (quoted) throw IoError("CSV: unterminated quoted field");
    if (any || !field.empty()) {
        rec.push_back(std::move(field));
        records.push_back(std::move(rec));
    }
    if (records.empty()) throw IoError("CSV: missing header");
    CsvTable t;
    t.header = std::move(records.front());
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].size() != t.header.size())
            throw IoError("CSV: row " + std::to_string(i) + " has " + std::to_string(records[i].size()) +
                          " fields, expected " + std::to_string(t.header.size()));
        t.rows.push_back(std::move(records[i]));
    }
    return t;
}

inline void write_csv(const fs::path& path, const CsvTable& t) { write_file(path, format_csv(t)); }
inline CsvTable read_csv(const fs::path& path) { return parse_csv(read_file(path)); }

// ---------------------------------------------------------------- traces

inline const std::vector<std::string>& trace_header() {
    static const std::vector<std::string> h{"epoch", "train_loss", "dice_vs_clean", "dice_vs_noisy", "test_dice", "nu_tilde"};
    return h;
}

inline CsvTable trace_to_csv(const TrainTrace& trace) {
    CsvTable t;
    t.header = trace_header();
    for (const auto& r : trace)
        t.rows.push_back({std::to_string(r.epoch), format_double(r.train_loss), format_double(r.dice_vs_clean),
                          format_double(r.dice_vs_noisy), format_double(r.test_dice), format_double(r.nu_tilde)});
    return t;
}

inline TrainTrace trace_from_csv(const CsvTable& t) {
    if (t.header != trace_header()) throw IoError("trace CSV: unexpected header");
    TrainTrace trace;
    for (const auto& r : t.rows) {
        EpochRecord e;
        e.epoch = std::size_t(parse_double(r[0]));
        e.train_loss = parse_double(r[1]);
        e.dice_vs_clean = parse_double(r[2]);
        e.dice_vs_noisy = parse_double(r[3]);
        e.test_dice = parse_double(r[4]);
        e.nu_tilde = parse_double(r[5]);
        trace.push_back(e);
    }
    return trace;
}

}  // namespace tlosslab
