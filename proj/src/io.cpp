#include "vjump/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

#include "vjump/error.hpp"

namespace vjump {

namespace {

constexpr double kTimestampTolerance = 1e-6;

struct Line {
    std::size_t number = 0;
    std::string_view text;
};

// Splits into lines, dropping '\r'. Blank lines are only tolerated at the end of the file.
std::vector<Line> split_lines(std::string_view text, const std::string& file) {
    std::vector<Line> lines;
    std::size_t pos = 0, number = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back({++number, line});
        pos = end + 1;
    }
    while (!lines.empty() && lines.back().text.empty()) lines.pop_back();
    for (const auto& l : lines) {
        if (l.text.empty()) throw ParseError(file, l.number, "blank line");
    }
    return lines;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(pos));
            return out;
        }
        out.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
}

double parse_double(std::string_view field, const std::string& file, std::size_t line, std::string_view column) {
    double value = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    if (!field.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (field.empty() || ec != std::errc() || ptr != last || !std::isfinite(value)) {
        throw ParseError(file, line, "column '" + std::string(column) + "': '" + std::string(field) +
                                         "' is not a finite number");
    }
    return value;
}

std::size_t parse_index(std::string_view field, const std::string& file, std::size_t line, std::string_view column) {
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
        throw ParseError(file, line, "column '" + std::string(column) + "': '" + std::string(field) +
                                         "' is not a non-negative integer");
    }
    return value;
}

int parse_label(std::string_view field, const ClassVocabulary& vocab, const std::string& file, std::size_t line) {
    const auto id = vocab.find(field);
    if (!id) {
        throw ParseError(file, line, "unknown label '" + std::string(field) + "'; known labels: " + vocab.describe());
    }
    return *id;
}

void check_header(const Line& header, std::span<const std::string_view> expected, const std::string& file) {
    const auto fields = split_fields(header.text);
    for (std::size_t i = 0; i < std::max(fields.size(), expected.size()); ++i) {
        const std::string_view want = i < expected.size() ? expected[i] : std::string_view("(end of header)");
        const std::string_view got = i < fields.size() ? fields[i] : std::string_view("(missing)");
        if (want != got) {
            throw ParseError(file, header.number, "header column " + std::to_string(i + 1) + ": expected '" +
                                                      std::string(want) + "', found '" + std::string(got) + "'");
        }
    }
}

std::vector<std::string_view> header_columns(std::string_view header) { return split_fields(header); }

void require_field_count(const std::vector<std::string_view>& fields, std::size_t n, const std::string& file,
                         std::size_t line) {
    if (fields.size() != n) {
        throw ParseError(file, line, "expected " + std::to_string(n) + " fields, found " + std::to_string(fields.size()));
    }
}

struct Interval {
    Segment segment;
    std::size_t line = 0;
};

// Sorts by start and rejects overlaps, naming the later row.
void check_no_overlap(std::vector<Interval>& rows, const std::string& file) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Interval& a, const Interval& b) { return a.segment.start < b.segment.start; });
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].segment.start < rows[i - 1].segment.end) {
            const auto& a = rows[i - 1];
            const auto& b = rows[i];
            throw ParseError(file, std::max(a.line, b.line),
                             "segment [" + std::to_string(b.segment.start) + ", " + std::to_string(b.segment.end) +
                                 ") overlaps [" + std::to_string(a.segment.start) + ", " +
                                 std::to_string(a.segment.end) + ") from line " + std::to_string(std::min(a.line, b.line)));
        }
    }
}

Segment parse_interval(std::string_view start_field, std::string_view end_field, std::string_view label,
                       const ClassVocabulary& vocab, const std::string& file, std::size_t line) {
    Segment s;
    s.start = parse_index(start_field, file, line, "start_sample");
    s.end = parse_index(end_field, file, line, "end_sample");
    if (s.end <= s.start) {
        throw ParseError(file, line, "reversed or empty interval [" + std::to_string(s.start) + ", " +
                                         std::to_string(s.end) + ")");
    }
    s.class_id = parse_label(label, vocab, file, line);
    if (s.class_id == 0) throw ParseError(file, line, "the background class cannot be annotated");
    return s;
}

}  // namespace

std::string format_number(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", value);
    return buf;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("error while reading '" + path.string() + "'");
    return std::move(ss).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw IoError("error while writing '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move output into place at '" + path.string() + "'");
    }
}

ImuSession read_session_csv(const std::filesystem::path& path, const ClassVocabulary& vocab) {
    const std::string file = path.string();
    const std::string text = read_text_file(path);
    const auto lines = split_lines(text, file);
    if (lines.empty()) throw ParseError(file, 1, "missing header");

    const auto columns = header_columns(lines[0].text);
    const bool labeled_header = !columns.empty() && columns.back() == "label";
    const std::size_t channels = columns.size() - 1 - (labeled_header ? 1 : 0);
    if (columns.size() < 2 || channels != kNumChannels) {
        throw ParseError(file, lines[0].number,
                         "channel mismatch: expected " + std::to_string(kNumChannels) +
                             " IMU channels (ax,ay,az,gx,gy,gz), found " +
                             std::to_string(columns.size() < 2 ? 0 : channels));
    }
    const bool has_labels = columns.size() == kNumChannels + 2;
    std::vector<std::string_view> expected = header_columns(kSessionHeader);
    if (has_labels) expected.push_back("label");
    check_header(lines[0], expected, file);
    if (lines.size() < 2) throw ParseError(file, 1, "no samples after the header");

    ImuSession session;
    session.subject_id = path.stem().string();
    const std::size_t n = lines.size() - 1;
    session.samples = Tensor2(n, kNumChannels);
    if (has_labels) session.labels = LabelSequence(n);
    const double step = 1.0 / session.sample_rate_hz;
    double previous_t = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Line& line = lines[i + 1];
        const auto fields = split_fields(line.text);
        require_field_count(fields, expected.size(), file, line.number);
        const double t = parse_double(fields[0], file, line.number, "t");
        if (i == 0) {
            session.start_time_s = t;
        } else if (std::abs(t - previous_t - step) > kTimestampTolerance) {
            throw ParseError(file, line.number, "irregular timestamp " + std::string(fields[0]) +
                                                    ": expected a step of 0.01 s after " + format_number(previous_t));
        }
        previous_t = t;
        for (std::size_t c = 0; c < kNumChannels; ++c) {
            session.samples(i, c) = parse_double(fields[c + 1], file, line.number, expected[c + 1]);
        }
        if (has_labels) (*session.labels)[i] = parse_label(fields.back(), vocab, file, line.number);
    }
    return session;
}

std::string format_session_csv(const ImuSession& session, const ClassVocabulary& vocab) {
    session.validate();
    std::string out(kSessionHeader);
    if (session.labels) out += ",label";
    out += '\n';
    for (std::size_t i = 0; i < session.length(); ++i) {
        out += format_number(session.start_time_s + static_cast<double>(i) / session.sample_rate_hz);
        for (std::size_t c = 0; c < kNumChannels; ++c) {
            out += ',';
            out += format_number(session.samples(i, c));
        }
        if (session.labels) {
            out += ',';
            out += vocab.name((*session.labels)[i]);
        }
        out += '\n';
    }
    return out;
}

void write_session_csv(const ImuSession& session, const std::filesystem::path& path, const ClassVocabulary& vocab) {
    write_file_atomic(path, format_session_csv(session, vocab));
}

std::vector<Segment> read_annotations(const std::filesystem::path& path, const ClassVocabulary& vocab,
                                      std::size_t length) {
    const std::string file = path.string();
    const std::string text = read_text_file(path);
    const auto lines = split_lines(text, file);
    if (lines.empty()) throw ParseError(file, 1, "missing header");
    check_header(lines[0], header_columns(kAnnotationHeader), file);

    std::vector<Interval> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto fields = split_fields(lines[i].text);
        require_field_count(fields, 3, file, lines[i].number);
        Segment s = parse_interval(fields[0], fields[1], fields[2], vocab, file, lines[i].number);
        if (length != 0 && s.end > length) {
            throw ParseError(file, lines[i].number, "end_sample " + std::to_string(s.end) +
                                                        " exceeds the session length " + std::to_string(length));
        }
        rows.push_back({s, lines[i].number});
    }
    check_no_overlap(rows, file);
    std::vector<Segment> out;
    for (const auto& r : rows) out.push_back(r.segment);
    return out;
}

void write_annotations(std::span<const Segment> segments, const std::filesystem::path& path,
                       const ClassVocabulary& vocab) {
    std::string out(kAnnotationHeader);
    out += '\n';
    for (const auto& s : segments) {
        out += std::to_string(s.start) + ',' + std::to_string(s.end) + ',' + vocab.name(s.class_id) + '\n';
    }
    write_file_atomic(path, out);
}

std::vector<HeightRecord> read_heights(const std::filesystem::path& path, const ClassVocabulary& vocab) {
    const std::string file = path.string();
    const std::string text = read_text_file(path);
    const auto lines = split_lines(text, file);
    if (lines.empty()) throw ParseError(file, 1, "missing header");
    check_header(lines[0], header_columns(kHeightsHeader), file);

    std::vector<HeightRecord> out;
    std::map<std::string, std::vector<Interval>> per_subject;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t ln = lines[i].number;
        const auto fields = split_fields(lines[i].text);
        require_field_count(fields, 5, file, ln);
        HeightRecord r;
        r.subject_id = std::string(fields[0]);
        if (r.subject_id.empty()) throw ParseError(file, ln, "empty subject_id");
        r.segment = parse_interval(fields[1], fields[2], fields[3], vocab, file, ln);
        if (!vocab.is_height_eligible(r.segment.class_id)) {
            throw ParseError(file, ln, "class '" + std::string(fields[3]) + "' does not carry a height");
        }
        r.height_m = parse_double(fields[4], file, ln, "height_m");
        if (!(r.height_m > 0.0)) throw ParseError(file, ln, "height_m must be > 0, got " + std::string(fields[4]));
        per_subject[r.subject_id].push_back({r.segment, ln});
        out.push_back(std::move(r));
    }
    for (auto& [subject, rows] : per_subject) check_no_overlap(rows, file);
    return out;
}

void write_heights(std::span<const HeightRecord> records, const std::filesystem::path& path,
                   const ClassVocabulary& vocab) {
    std::string out(kHeightsHeader);
    out += '\n';
    for (const auto& r : records) {
        out += r.subject_id + ',' + std::to_string(r.segment.start) + ',' + std::to_string(r.segment.end) + ',' +
               vocab.name(r.segment.class_id) + ',' + format_number(r.height_m) + '\n';
    }
    write_file_atomic(path, out);
}

}  // namespace vjump
