#include "onh/features.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace onh {

std::string_view to_string(EyeClass c) {
    switch (c) {
        case EyeClass::Odd: return "odd";
        case EyeClass::Papilledema: return "papilledema";
        case EyeClass::Healthy: return "healthy";
    }
    return "?";
}

std::optional<EyeClass> eye_class_from_string(std::string_view s) {
    if (s == "odd") return EyeClass::Odd;
    if (s == "papilledema") return EyeClass::Papilledema;
    if (s == "healthy") return EyeClass::Healthy;
    return std::nullopt;
}

void validate(const EyeFeatures& f) {
    if (f.eye_id.empty() || f.subject_id.empty())
        throw Error("eye features need non-empty eye_id and subject_id");
    if (f.eye_id.find(',') != std::string::npos || f.subject_id.find(',') != std::string::npos)
        throw Error("identifiers must not contain commas");
    for (double v : {f.drusen_mm3, f.swelling_mm3}) {
        if (!std::isfinite(v) || v < 0.0)
            throw Error("scores must be finite and >= 0 (eye " + f.eye_id + ")");
    }
}

namespace {

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double_field(std::string_view s, const std::string& ctx) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw Error(ctx + ": bad numeric field '" + std::string(s) + "'");
    return v;
}

std::vector<std::string_view> split_row(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

} // namespace

std::string scores_csv_row(const EyeFeatures& f) {
    std::ostringstream os;
    os << f.eye_id << "," << f.subject_id << ","
       << (f.true_class ? to_string(*f.true_class) : std::string_view{}) << ","
       << format_double(f.drusen_mm3) << "," << format_double(f.swelling_mm3);
    return os.str();
}

std::vector<EyeFeatures> read_scores_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open scores file: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw Error(path.string() + ": empty scores file");
    if (line != kScoresCsvHeader)
        throw Error(path.string() + ": unexpected header '" + line + "'");

    std::vector<EyeFeatures> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = split_row(line);
        const std::string ctx = path.string() + ":" + std::to_string(lineno);
        if (fields.size() != 5) throw Error(ctx + ": expected 5 fields");
        EyeFeatures f;
        f.eye_id = std::string(fields[0]);
        f.subject_id = std::string(fields[1]);
        if (!fields[2].empty()) {
            auto cls = eye_class_from_string(fields[2]);
            if (!cls) throw Error(ctx + ": unknown class '" + std::string(fields[2]) + "'");
            f.true_class = cls;
        }
        f.drusen_mm3 = parse_double_field(fields[3], ctx);
        f.swelling_mm3 = parse_double_field(fields[4], ctx);
        validate(f);
        rows.push_back(std::move(f));
    }
    return rows;
}

void write_scores_csv(const std::filesystem::path& path, std::span<const EyeFeatures> rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open scores file for writing: " + path.string());
    out << kScoresCsvHeader << "\n";
    for (const EyeFeatures& f : rows) {
        validate(f);
        out << scores_csv_row(f) << "\n";
    }
    if (!out) throw Error("write failed: " + path.string());
}

void append_scores_csv(const std::filesystem::path& path, const EyeFeatures& row) {
    validate(row);
    const bool exists = std::filesystem::exists(path);
    std::ofstream out(path, std::ios::app);
    if (!out) throw Error("cannot open scores file for appending: " + path.string());
    if (!exists) out << kScoresCsvHeader << "\n";
    out << scores_csv_row(row) << "\n";
    if (!out) throw Error("write failed: " + path.string());
}

} // namespace onh
