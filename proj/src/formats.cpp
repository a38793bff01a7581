#include <dlo/formats.hpp>

#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>

namespace dlo {

std::string formatDouble(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

LineWriter& LineWriter::raw(const std::string& s) {
    os_ << s;
    line_open_ = true;
    return *this;
}

LineWriter& LineWriter::tok(const std::string& s) {
    if (line_open_) os_ << ' ';
    os_ << s;
    line_open_ = true;
    return *this;
}

LineWriter& LineWriter::num(double v) { return tok(formatDouble(v)); }
LineWriter& LineWriter::num(int v) { return tok(std::to_string(v)); }

LineWriter& LineWriter::vec(const Vec3& v) {
    for (int i = 0; i < 3; ++i) num(v[i]);
    return *this;
}

LineWriter& LineWriter::vec(const VecX& v) {
    for (int i = 0; i < v.size(); ++i) num(v[i]);
    return *this;
}

void LineWriter::end() {
    os_ << '\n';
    line_open_ = false;
}

LineReader::LineReader(std::istream& is, std::string source_name) : is_(is), source_(std::move(source_name)) {}

bool LineReader::next() {
    std::string line;
    while (std::getline(is_, line)) {
        ++line_number_;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        tokens_.clear();
        std::istringstream ss(line);
        std::string tok;
        while (ss >> tok) tokens_.push_back(tok);
        if (!tokens_.empty()) return true;
    }
    tokens_.clear();
    eof_ = true;
    return false;
}

void LineReader::fail(const std::string& message) const {
    throw ParseError(source_ + ":" + std::to_string(line_number_) + ": " + message);
}

void LineReader::expectKey(const std::string& expected) {
    if (!next()) fail("unexpected end of file, expected '" + expected + "'");
    if (key() != expected) fail("expected '" + expected + "', got '" + key() + "'");
}

void LineReader::expectTokens(size_t n) const {
    if (tokens_.size() < n) fail("expected at least " + std::to_string(n) + " fields");
}

double LineReader::asDouble(size_t idx) const {
    expectTokens(idx + 1);
    const std::string& s = tokens_[idx];
    double v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail("not a number: '" + s + "'");
    return v;
}

int LineReader::asInt(size_t idx) const {
    expectTokens(idx + 1);
    const std::string& s = tokens_[idx];
    int v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail("not an integer: '" + s + "'");
    return v;
}

const std::string& LineReader::asString(size_t idx) const {
    expectTokens(idx + 1);
    return tokens_[idx];
}

Vec3 LineReader::asVec3(size_t idx) const { return Vec3(asDouble(idx), asDouble(idx + 1), asDouble(idx + 2)); }

VecX LineReader::asVecX(size_t idx, int n) const {
    VecX v(n);
    for (int i = 0; i < n; ++i) v[i] = asDouble(idx + i);
    return v;
}

void writeHeader(std::ostream& os, const std::string& kind) { os << kind << " v1\n"; }

void readHeader(LineReader& r, const std::string& kind) {
    if (!r.next()) r.fail("empty file, expected '" + kind + " v1'");
    if (r.key() != kind || r.tokens().size() < 2 || r.asString(1) != "v1")
        r.fail("expected header '" + kind + " v1'");
}

void writeDloBlock(std::ostream& os, const DloConfig& cfg, double total_length) {
    LineWriter w(os);
    w.tok("dlo").tok("m").num(cfg.m()).tok("length").num(total_length).end();
    w.tok("rest").vec(cfg.rest_lengths).end();
    for (const auto& v : cfg.vertices) w.tok("vertex").vec(v).end();
    for (const auto& f : cfg.frames) {
        const Quat q = f.quaternion();
        w.tok("frame").num(q.w()).num(q.x()).num(q.y()).num(q.z()).end();
    }
}

DloConfig readDloBlock(LineReader& r, double* total_length) {
    r.expectKey("dlo");
    if (r.asString(1) != "m" || r.asString(3) != "length") r.fail("malformed dlo header line");
    const int m = r.asInt(2);
    if (m < 3 || m > 1000) r.fail("unreasonable discretization count");
    if (total_length) *total_length = r.asDouble(4);

    DloConfig cfg;
    r.expectKey("rest");
    cfg.rest_lengths = r.asVecX(1, m + 1);
    cfg.vertices.resize(m + 2);
    for (int k = 0; k < m + 2; ++k) {
        r.expectKey("vertex");
        cfg.vertices[k] = r.asVec3(1);
    }
    cfg.frames.resize(m + 1);
    for (int k = 0; k < m + 1; ++k) {
        r.expectKey("frame");
        const Quat q(r.asDouble(1), r.asDouble(2), r.asDouble(3), r.asDouble(4));
        if (std::abs(q.norm() - 1.0) > 1e-6) r.fail("frame quaternion is not unit length");
        cfg.frames[k] = MaterialFrame::fromQuaternion(q);
    }
    return cfg;
}

}  // namespace dlo
