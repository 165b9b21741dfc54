#ifndef PHIGRAD_FRONTEND_HPP
#define PHIGRAD_FRONTEND_HPP

#include "phigrad/ast.hpp"
#include "phigrad/diag.hpp"

#include <string>
#include <vector>

namespace phigrad {

// Parses DPL source. Throws Error with line/column on syntax problems.
Program parseProgram(const std::string& source);

// Semantic checks: use-before-def on every path, array parameters read-only,
// break only inside while bodies, for-bounds affine and inactive, intrinsic
// arity, scalar/array usage. Empty result means the program is well-formed.
std::vector<Diagnostic> validate(const Program& p);

// parse + validate; throws Error carrying the first diagnostic.
Program parseAndValidate(const std::string& source);

// JSON AST dump (stable field names: kind, span, children).
std::string astToJson(const Program& p);

} // namespace phigrad

#endif // PHIGRAD_FRONTEND_HPP
