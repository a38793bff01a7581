#pragma once

#include <dlo/der.hpp>
#include <dlo/types.hpp>

#include <iosfwd>
#include <sstream>
#include <string>
#include <vector>

namespace dlo {

// Line-oriented text file helpers. Every file starts with "<kind> v<N>";
// fields are whitespace-separated tokens; '#' starts a comment. Doubles are
// written with %.17g so dump -> load roundtrips bit-exactly.

std::string formatDouble(double v);

class LineWriter {
  public:
    explicit LineWriter(std::ostream& os) : os_(os) {}

    LineWriter& raw(const std::string& s);
    LineWriter& tok(const std::string& s);
    LineWriter& num(double v);
    LineWriter& num(int v);
    LineWriter& vec(const Vec3& v);
    LineWriter& vec(const VecX& v);
    void end();

  private:
    std::ostream& os_;
    bool line_open_ = false;
};

class LineReader {
  public:
    LineReader(std::istream& is, std::string source_name);

    // Advances to the next non-empty, non-comment line and tokenizes it.
    bool next();
    bool eof() const { return eof_; }

    const std::string& key() const { return tokens_.empty() ? empty_ : tokens_[0]; }
    const std::vector<std::string>& tokens() const { return tokens_; }
    int lineNumber() const { return line_number_; }

    double asDouble(size_t idx) const;
    int asInt(size_t idx) const;
    const std::string& asString(size_t idx) const;
    Vec3 asVec3(size_t idx) const;  // three consecutive tokens
    VecX asVecX(size_t idx, int n) const;

    [[noreturn]] void fail(const std::string& message) const;
    void expectKey(const std::string& expected);
    void expectTokens(size_t n) const;

  private:
    std::istream& is_;
    std::string source_;
    std::vector<std::string> tokens_;
    std::string empty_;
    int line_number_ = 0;
    bool eof_ = false;
};

// Versioned header handling: "<kind> v1"
void writeHeader(std::ostream& os, const std::string& kind);
void readHeader(LineReader& r, const std::string& kind);

// DLO block, shared by task files, path dumps, episode logs, and
// observation files:
//   dlo m <m> length <L>
//   rest <m+1 doubles>
//   vertex <x y z>          (m+2 lines)
//   frame <qw qx qy qz>     (m+1 lines)
void writeDloBlock(std::ostream& os, const DloConfig& cfg, double total_length);
DloConfig readDloBlock(LineReader& r, double* total_length = nullptr);

}  // namespace dlo
