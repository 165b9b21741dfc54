#ifndef PHIGRAD_DIAG_HPP
#define PHIGRAD_DIAG_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace phigrad {

// Half-open source range; line/col are 1-based, col 0 means "unknown".
struct Span {
    int line = 0;
    int col = 0;

    std::string str() const {
        if (line == 0) return "<unknown>";
        return std::to_string(line) + ":" + std::to_string(col);
    }
};

struct Diagnostic {
    Span span;
    std::string message;

    std::string str() const { return span.str() + ": " + message; }
};

class Error : public std::runtime_error {
  public:
    Error(Span span, const std::string& msg)
        : std::runtime_error(span.str() + ": " + msg), span_(span) {}
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}

    Span span() const { return span_; }

  private:
    Span span_{};
};

} // namespace phigrad

#endif // PHIGRAD_DIAG_HPP
