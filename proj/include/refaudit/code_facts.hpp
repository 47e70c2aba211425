#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"
#include "refaudit/errors.hpp"
#include "refaudit/util.hpp"

// Read-only, syntax-aware access over a repository checkout. First-class
// grammar support covers Python source; every other file is reachable through
// enumeration and regex search only. Nothing in this namespace ever writes
// into the checkout.
namespace refaudit::code_facts {

namespace fs = std::filesystem;
using nlohmann::json;

struct RepoCheckout {
  fs::path root;
  std::string project;
  std::string commit;

  RepoCheckout(fs::path root_path, std::string project_name, std::string commit_id)
      : root(std::move(root_path)),
        project(std::move(project_name)),
        commit(std::move(commit_id)) {
    if (!fs::exists(root) || !fs::is_directory(root))
      throw Error(Errc::precondition, "checkout root is not a directory: " + root.string());
    if (commit.empty())
      throw Error(Errc::precondition, "checkout commit id must be non-empty");
  }
};

enum class SymbolKind { function, method, klass };

inline const char* symbol_kind_name(SymbolKind k) {
  switch (k) {
    case SymbolKind::function: return "function";
    case SymbolKind::method: return "method";
    case SymbolKind::klass: return "class";
  }
  return "function";
}

struct FunctionFact {
  std::string file;            // repo-relative, '/' separators
  std::string qualified_name;  // dotted by enclosing class/function scopes
  int start_line = 0;          // 1-based, inclusive
  int end_line = 0;
  SymbolKind kind = SymbolKind::function;

  bool operator==(const FunctionFact&) const = default;
};

struct CallRelation {
  FunctionFact caller;
  std::string callee_name;  // dotted name as written at the call site
  std::optional<FunctionFact> callee_resolved;
  int call_site_line = 0;

  bool operator==(const CallRelation&) const = default;
};

enum class FlowVia { parameter, assignment, call_argument, ret };

inline const char* flow_via_name(FlowVia v) {
  switch (v) {
    case FlowVia::parameter: return "parameter";
    case FlowVia::assignment: return "assignment";
    case FlowVia::call_argument: return "call_argument";
    case FlowVia::ret: return "return";
  }
  return "assignment";
}

struct DataFlowEdge {
  std::string from_symbol;
  std::string to_symbol;
  FlowVia via = FlowVia::assignment;

  bool operator==(const DataFlowEdge&) const = default;
};

struct DataFlowSummary {
  FunctionFact function;
  std::vector<DataFlowEdge> edges;
  bool unparsed = false;

  bool operator==(const DataFlowSummary&) const = default;
};

struct SearchHit {
  std::string file;
  int line = 0;
  std::string text;

  bool operator==(const SearchHit&) const = default;
};

struct FunctionCode {
  std::string source;  // lines joined with '\n', numbered via render_numbered()
  FunctionFact fact;
  bool unparsed = false;
};

struct SarifResult {
  std::string rule_id;
  std::string file;
  int line = 0;
  std::string message;

  bool operator==(const SarifResult&) const = default;
};

// ---------------------------------------------------------------------------
// internal: python structural scanner

namespace detail {

inline bool looks_binary(std::string_view text) {
  std::size_t limit = std::min<std::size_t>(text.size(), 4096);
  for (std::size_t i = 0; i < limit; ++i)
    if (text[i] == '\0') return true;
  return false;
}

// Per-line view with string/comment content blanked out. Keeps the line
// length identical so column positions stay meaningful.
struct ScannedLine {
  std::string code;        // string bodies and comments replaced by spaces
  bool inside_string;      // line lies entirely within a triple-quoted string
  bool blank;              // no code content after stripping
  int indent;              // leading width, tabs expanded to 8
};

inline std::vector<ScannedLine> scan_lines(const std::vector<std::string>& lines) {
  std::vector<ScannedLine> out;
  out.reserve(lines.size());
  bool in_triple = false;
  char triple_quote = '"';
  for (const auto& raw : lines) {
    ScannedLine sl{std::string(raw.size(), ' '), in_triple, true, 0};
    std::size_t i = 0;
    bool in_single = false;
    char quote = '"';
    bool started_in_triple = in_triple;
    while (i < raw.size()) {
      char c = raw[i];
      if (in_triple) {
        if (c == triple_quote && i + 2 < raw.size() + 1 && raw.compare(i, 3, std::string(3, triple_quote)) == 0) {
          in_triple = false;
          i += 3;
          continue;
        }
        ++i;
        continue;
      }
      if (in_single) {
        if (c == '\\') { i += 2; continue; }
        if (c == quote) in_single = false;
        ++i;
        continue;
      }
      if (c == '#') break;  // comment to end of line
      if (c == '"' || c == '\'') {
        if (raw.compare(i, 3, std::string(3, c)) == 0) {
          in_triple = true;
          triple_quote = c;
          i += 3;
        } else {
          in_single = true;
          quote = c;
          ++i;
        }
        continue;
      }
      sl.code[i] = c;
      ++i;
    }
    // unterminated single-quoted string ends at the line break
    sl.inside_string = started_in_triple && in_triple;
    int indent = 0;
    bool has_code = false;
    for (char c : sl.code) {
      if (c == ' ') { ++indent; continue; }
      if (c == '\t') { indent += 8 - indent % 8; continue; }
      has_code = true;
      break;
    }
    sl.blank = !has_code;
    sl.indent = has_code ? indent : 0;
    out.push_back(std::move(sl));
  }
  return out;
}

struct PyEntity {
  FunctionFact fact;
  int indent = 0;
  std::string params;  // raw parameter text of a def header
};

inline const std::regex& entity_re() {
  static const std::regex re(R"(^\s*(?:async\s+)?(def|class)\s+([A-Za-z_]\w*)\s*(\(([^)]*)\)?)?)");
  return re;
}

// Structural scan of one python file: functions, methods, classes with
// 1-based inclusive line spans. Tolerant by construction; returns entities in
// source order.
inline std::vector<PyEntity> parse_python(const std::string& file,
                                          const std::vector<std::string>& lines) {
  auto scanned = scan_lines(lines);
  std::vector<PyEntity> done;
  struct Open {
    PyEntity entity;
    int last_body_line;
  };
  std::vector<Open> stack;

  auto close_down_to = [&](int indent) {
    while (!stack.empty() && stack.back().entity.indent >= indent) {
      Open o = stack.back();
      stack.pop_back();
      o.entity.fact.end_line = o.last_body_line;
      done.push_back(o.entity);
    }
  };

  for (std::size_t idx = 0; idx < scanned.size(); ++idx) {
    const auto& sl = scanned[idx];
    int line_no = static_cast<int>(idx) + 1;
    if (sl.blank) continue;
    if (sl.inside_string) {
      // body of a docstring or literal: counts toward every open entity
      for (auto& o : stack) o.last_body_line = line_no;
      continue;
    }
    std::smatch m;
    bool is_entity = std::regex_search(sl.code, m, entity_re());
    if (!is_entity) {
      close_down_to(sl.indent + 1 > 0 ? sl.indent + 1 : 1);  // close deeper-only
      // a statement at indent I closes entities with indent >= I
      while (!stack.empty() && stack.back().entity.indent >= sl.indent) {
        Open o = stack.back();
        stack.pop_back();
        o.entity.fact.end_line = o.last_body_line;
        done.push_back(o.entity);
      }
      for (auto& o : stack) o.last_body_line = line_no;
      continue;
    }
    close_down_to(sl.indent + 1);
    while (!stack.empty() && stack.back().entity.indent >= sl.indent) {
      Open o = stack.back();
      stack.pop_back();
      o.entity.fact.end_line = o.last_body_line;
      done.push_back(o.entity);
    }
    bool is_class = m[1].str() == "class";
    std::string name = m[2].str();
    std::string qualified = name;
    if (!stack.empty()) qualified = stack.back().entity.fact.qualified_name + "." + name;
    SymbolKind kind = SymbolKind::function;
    if (is_class) {
      kind = SymbolKind::klass;
    } else if (!stack.empty() && stack.back().entity.fact.kind == SymbolKind::klass) {
      kind = SymbolKind::method;
    }
    PyEntity e;
    e.fact = FunctionFact{file, qualified, line_no, line_no, kind};
    e.indent = sl.indent;
    if (!is_class && m[4].matched) e.params = m[4].str();
    stack.push_back(Open{e, line_no});
    for (auto& o : stack) o.last_body_line = std::max(o.last_body_line, line_no);
  }
  while (!stack.empty()) {
    Open o = stack.back();
    stack.pop_back();
    o.entity.fact.end_line = o.last_body_line;
    done.push_back(o.entity);
  }
  std::sort(done.begin(), done.end(), [](const PyEntity& a, const PyEntity& b) {
    if (a.fact.start_line != b.fact.start_line) return a.fact.start_line < b.fact.start_line;
    return a.fact.qualified_name < b.fact.qualified_name;
  });
  return done;
}

inline const std::set<std::string>& python_keywords() {
  static const std::set<std::string> kw = {
      "if",     "elif",   "else",  "while",  "for",    "return", "yield",
      "assert", "del",    "not",   "and",    "or",     "in",     "is",
      "lambda", "except", "raise", "with",   "def",    "class",  "import",
      "from",   "pass",   "break", "continue", "global", "nonlocal",
      "async",  "await",  "try",   "finally", "match",  "case",   "None",
      "True",   "False"};
  return kw;
}

inline const std::regex& call_re() {
  static const std::regex re(R"(([A-Za-z_]\w*(?:\.[A-Za-z_]\w*)*)\s*\()");
  return re;
}

inline const std::regex& ident_re() {
  static const std::regex re(R"([A-Za-z_]\w*(?:\.[A-Za-z_]\w*)*)");
  return re;
}

// identifiers in an expression, keywords excluded; dotted chains collapse to
// their leading root symbol (torch.load -> torch.load kept whole for callees,
// but data-flow sources use the full chain text as written)
inline std::vector<std::string> expr_identifiers(const std::string& expr) {
  std::vector<std::string> out;
  auto begin = std::sregex_iterator(expr.begin(), expr.end(), ident_re());
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    std::string sym = it->str();
    std::string head = sym.substr(0, sym.find('.'));
    if (python_keywords().count(head)) continue;
    out.push_back(sym);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// operations

// All regular files under the checkout (or under `subdir`), repo-relative,
// lexicographic, with version-control metadata directories skipped.
inline std::vector<std::string> list_files(const RepoCheckout& checkout,
                                           std::optional<std::string> subdir = std::nullopt) {
  static const std::set<std::string> vcs_dirs = {".git", ".hg", ".svn"};
  fs::path base = checkout.root;
  if (subdir && !subdir->empty()) {
    fs::path candidate = checkout.root / *subdir;
    if (!util::path_within(checkout.root, candidate))
      throw Error(Errc::precondition, "path outside checkout: " + *subdir);
    if (!fs::exists(candidate))
      throw Error(Errc::not_found, "empty scope: subdir does not exist: " + *subdir);
    base = candidate;
  }
  std::vector<std::string> files;
  auto it = fs::recursive_directory_iterator(base);
  for (; it != fs::recursive_directory_iterator(); ++it) {
    if (it->is_directory() && vcs_dirs.count(it->path().filename().string())) {
      it.disable_recursion_pending();
      continue;
    }
    if (!it->is_regular_file()) continue;
    files.push_back(fs::relative(it->path(), checkout.root).generic_string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

inline bool file_exists(const RepoCheckout& checkout, const std::string& rel) {
  fs::path p = checkout.root / rel;
  return util::path_within(checkout.root, p) && fs::is_regular_file(p);
}

inline std::string read_checkout_file(const RepoCheckout& checkout, const std::string& rel) {
  fs::path p = checkout.root / rel;
  if (!util::path_within(checkout.root, p))
    throw Error(Errc::precondition, "path outside checkout: " + rel);
  if (!fs::is_regular_file(p))
    throw Error(Errc::not_found, "no such file in checkout: " + rel);
  return util::read_text_file(p);
}

// Validates regex syntax ahead of std::regex so errors can carry a position.
inline void precheck_pattern(const std::string& pattern) {
  int depth = 0;
  int bracket = -1;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    char c = pattern[i];
    if (c == '\\') { ++i; continue; }
    if (bracket >= 0) {
      if (c == ']') bracket = -1;
      continue;
    }
    if (c == '[') { bracket = static_cast<int>(i); continue; }
    if (c == '(') ++depth;
    if (c == ')') {
      --depth;
      if (depth < 0)
        throw Error(Errc::pattern, "pattern error at position " + std::to_string(i) +
                                       ": unbalanced ')' in \"" + pattern + "\"");
    }
  }
  if (!pattern.empty() && pattern.back() == '\\' &&
      (pattern.size() < 2 || pattern[pattern.size() - 2] != '\\'))
    throw Error(Errc::pattern, "pattern error at position " + std::to_string(pattern.size() - 1) +
                                   ": trailing backslash in \"" + pattern + "\"");
  if (depth > 0) {
    std::size_t pos = pattern.find('(');
    throw Error(Errc::pattern, "pattern error at position " + std::to_string(pos) +
                                   ": unbalanced '(' in \"" + pattern + "\"");
  }
  if (bracket >= 0)
    throw Error(Errc::pattern, "pattern error at position " + std::to_string(bracket) +
                                   ": unterminated '[' in \"" + pattern + "\"");
}

// Regex search over raw file text. `scope` may name a file or a directory
// inside the checkout; empty means the whole tree. Hits come back in
// (file, line) order; line text is truncated to `max_width`.
inline std::vector<SearchHit> search(const RepoCheckout& checkout, const std::string& pattern,
                                     const std::string& scope = "",
                                     std::size_t max_hits = SIZE_MAX,
                                     std::size_t max_width = 400) {
  precheck_pattern(pattern);
  std::regex re;
  try {
    re = std::regex(pattern, std::regex::ECMAScript);
  } catch (const std::regex_error& e) {
    throw Error(Errc::pattern, std::string("pattern error at position 0: ") + e.what() +
                                   " in \"" + pattern + "\"");
  }

  std::vector<std::string> files;
  if (!scope.empty() && file_exists(checkout, scope)) {
    files.push_back(scope);
  } else {
    files = list_files(checkout, scope.empty() ? std::nullopt : std::optional<std::string>(scope));
  }

  std::vector<SearchHit> hits;
  for (const auto& rel : files) {
    if (hits.size() >= max_hits) break;
    std::string text = read_checkout_file(checkout, rel);
    if (detail::looks_binary(text)) continue;
    auto lines = util::split_lines(text);
    for (std::size_t i = 0; i < lines.size() && hits.size() < max_hits; ++i) {
      if (std::regex_search(lines[i], re))
        hits.push_back({rel, static_cast<int>(i) + 1, util::truncate(lines[i], max_width)});
    }
  }
  return hits;
}

inline std::vector<FunctionFact> extract_facts(const RepoCheckout& checkout,
                                               const std::string& file) {
  std::string text = read_checkout_file(checkout, file);
  if (detail::looks_binary(text)) return {};
  auto entities = detail::parse_python(file, util::split_lines(text));
  std::vector<FunctionFact> facts;
  facts.reserve(entities.size());
  for (auto& e : entities) facts.push_back(e.fact);
  return facts;
}

inline std::string render_numbered(const std::vector<std::string>& lines, int first_line) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    out += std::to_string(first_line + static_cast<int>(i));
    out += "\t";
    out += lines[i];
    out += "\n";
  }
  return out;
}

// Extract one function/class span by name or by a line number it contains.
// Unparseable (binary) files degrade to a whole-file return flagged unparsed.
inline FunctionCode get_function_code(const RepoCheckout& checkout, const std::string& file,
                                      const std::string& name_or_line) {
  std::string text = read_checkout_file(checkout, file);
  auto lines = util::split_lines(text);
  if (detail::looks_binary(text)) {
    FunctionCode fc;
    fc.source = render_numbered(lines, 1);
    fc.fact = FunctionFact{file, name_or_line, 1, static_cast<int>(lines.size()),
                           SymbolKind::function};
    fc.unparsed = true;
    return fc;
  }
  auto entities = detail::parse_python(file, lines);

  const FunctionFact* found = nullptr;
  bool numeric = !name_or_line.empty() &&
                 std::all_of(name_or_line.begin(), name_or_line.end(),
                             [](unsigned char c) { return std::isdigit(c); });
  if (numeric) {
    int line = std::stoi(name_or_line);
    for (const auto& e : entities) {  // innermost containing span
      if (e.fact.start_line <= line && line <= e.fact.end_line) {
        if (!found || e.fact.start_line > found->start_line) found = &e.fact;
      }
    }
  } else {
    for (const auto& e : entities) {
      if (e.fact.qualified_name == name_or_line) { found = &e.fact; break; }
    }
    if (!found) {
      for (const auto& e : entities) {
        auto& q = e.fact.qualified_name;
        auto pos = q.rfind('.');
        std::string base = pos == std::string::npos ? q : q.substr(pos + 1);
        if (base == name_or_line) { found = &e.fact; break; }
      }
    }
  }
  if (!found)
    throw Error(Errc::not_found, "function/class not found: " + name_or_line + " in " + file);

  std::vector<std::string> span(lines.begin() + (found->start_line - 1),
                                lines.begin() + found->end_line);
  FunctionCode fc;
  fc.source = render_numbered(span, found->start_line);
  fc.fact = *found;
  return fc;
}

namespace detail {

inline const std::regex& import_re() {
  static const std::regex re(R"(^\s*import\s+(.+))");
  return re;
}
inline const std::regex& from_import_re() {
  static const std::regex re(R"(^\s*from\s+([.\w]+)\s+import\s+(.+))");
  return re;
}

// Normalizes relative imports to repo-relative dotted form based on the
// importing file's package path.
inline std::string resolve_relative(const std::string& file, const std::string& module,
                                    const std::string& names) {
  std::size_t dots = 0;
  while (dots < module.size() && module[dots] == '.') ++dots;
  std::string rest = module.substr(dots);

  std::vector<std::string> pkg;
  fs::path dir = fs::path(file).parent_path();
  for (const auto& part : dir) pkg.push_back(part.generic_string());
  // one leading dot = current package; each extra dot climbs one level
  for (std::size_t i = 1; i < dots && !pkg.empty(); ++i) pkg.pop_back();

  std::string base = util::join(pkg, ".");
  if (!rest.empty()) return base.empty() ? rest : base + "." + rest;
  // "from . import x" -> the first imported name anchors the module
  std::string first = util::trim(names.substr(0, names.find(',')));
  std::size_t as_pos = first.find(" as ");
  if (as_pos != std::string::npos) first = util::trim(first.substr(0, as_pos));
  return base.empty() ? first : base + "." + first;
}

}  // namespace detail

// Imported module names, deduplicated, source order preserved. Binary files
// fall back to a raw byte scan and report through `fallback_used`.
inline std::vector<std::string> get_imports(const RepoCheckout& checkout, const std::string& file,
                                            bool* fallback_used = nullptr) {
  std::string text = read_checkout_file(checkout, file);
  if (fallback_used) *fallback_used = false;
  std::vector<std::string> lines;
  if (detail::looks_binary(text)) {
    if (fallback_used) *fallback_used = true;
    lines = util::split_lines(text);  // best effort over raw bytes
  } else {
    auto scanned = detail::scan_lines(util::split_lines(text));
    for (auto& sl : scanned) lines.push_back(sl.code);
  }

  std::vector<std::string> imports;
  std::smatch m;
  for (const auto& line : lines) {
    if (std::regex_search(line, m, detail::from_import_re())) {
      std::string module = m[1].str();
      if (module[0] == '.')
        imports.push_back(detail::resolve_relative(file, module, m[2].str()));
      else
        imports.push_back(module);
      continue;
    }
    if (std::regex_search(line, m, detail::import_re())) {
      std::string rest = m[1].str();
      std::size_t start = 0;
      while (start < rest.size()) {
        std::size_t comma = rest.find(',', start);
        std::string item = util::trim(rest.substr(start, comma - start));
        std::size_t as_pos = item.find(" as ");
        if (as_pos != std::string::npos) item = util::trim(item.substr(0, as_pos));
        if (!item.empty() && (std::isalpha(static_cast<unsigned char>(item[0])) || item[0] == '_'))
          imports.push_back(item);
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
    }
  }
  return util::dedup(imports);
}

inline bool is_python_file(const std::string& rel) { return rel.ends_with(".py"); }

// Every syntactic call site inside an extracted entity yields one relation.
// Resolution is name-based and checkout-local: self/cls against the enclosing
// class, then exact qualified match, then unique basename match.
inline std::vector<CallRelation> extract_call_relations(
    const RepoCheckout& checkout, std::vector<std::string>* diagnostics = nullptr) {
  std::vector<std::string> files;
  for (const auto& f : list_files(checkout))
    if (is_python_file(f)) files.push_back(f);

  struct FileData {
    std::vector<detail::PyEntity> entities;
    std::vector<detail::ScannedLine> scanned;
  };
  std::map<std::string, FileData> parsed;
  std::vector<FunctionFact> all_facts;
  for (const auto& f : files) {
    std::string text = read_checkout_file(checkout, f);
    if (detail::looks_binary(text)) {
      if (diagnostics) diagnostics->push_back("parse skipped (binary): " + f);
      continue;
    }
    auto lines = util::split_lines(text);
    FileData fd;
    fd.entities = detail::parse_python(f, lines);
    fd.scanned = detail::scan_lines(lines);
    for (auto& e : fd.entities) all_facts.push_back(e.fact);
    parsed.emplace(f, std::move(fd));
  }

  // basename -> facts, for unique-match resolution
  std::map<std::string, std::vector<const FunctionFact*>> by_basename;
  std::map<std::string, const FunctionFact*> by_qualified_per_file;
  for (const auto& fact : all_facts) {
    auto pos = fact.qualified_name.rfind('.');
    std::string base =
        pos == std::string::npos ? fact.qualified_name : fact.qualified_name.substr(pos + 1);
    by_basename[base].push_back(&fact);
    by_qualified_per_file[fact.file + "::" + fact.qualified_name] = &fact;
  }

  auto resolve = [&](const FunctionFact& caller, const std::string& callee)
      -> std::optional<FunctionFact> {
    std::string name = callee;
    if (name.starts_with("self.") || name.starts_with("cls.")) {
      std::string member = name.substr(name.find('.') + 1);
      auto dot = caller.qualified_name.rfind('.');
      if (dot != std::string::npos) {
        std::string cls_prefix = caller.qualified_name.substr(0, dot);
        auto it = by_qualified_per_file.find(caller.file + "::" + cls_prefix + "." + member);
        if (it != by_qualified_per_file.end()) return *it->second;
      }
      name = member;
    }
    for (const auto& fact : all_facts)
      if (fact.qualified_name == name) return fact;
    auto pos = name.rfind('.');
    std::string base = pos == std::string::npos ? name : name.substr(pos + 1);
    auto it = by_basename.find(base);
    if (it != by_basename.end() && it->second.size() == 1) return *it->second[0];
    return std::nullopt;
  };

  std::vector<CallRelation> relations;
  for (const auto& [file, fd] : parsed) {
    for (std::size_t idx = 0; idx < fd.scanned.size(); ++idx) {
      const auto& sl = fd.scanned[idx];
      if (sl.blank || sl.inside_string) continue;
      int line_no = static_cast<int>(idx) + 1;

      // innermost entity containing this line
      const detail::PyEntity* owner = nullptr;
      for (const auto& e : fd.entities) {
        if (e.fact.start_line <= line_no && line_no <= e.fact.end_line) {
          if (!owner || e.fact.start_line > owner->fact.start_line) owner = &e;
        }
      }
      if (!owner) continue;

      auto begin = std::sregex_iterator(sl.code.begin(), sl.code.end(), detail::call_re());
      for (auto it = begin; it != std::sregex_iterator(); ++it) {
        std::string callee = (*it)[1].str();
        std::string head = callee.substr(0, callee.find('.'));
        if (detail::python_keywords().count(head)) continue;
        // skip the def/class header name itself
        auto match_pos = static_cast<std::size_t>(it->position(1));
        std::string before = sl.code.substr(0, match_pos);
        std::smatch dm;
        if (std::regex_search(before, dm, std::regex(R"((?:^|\s)(?:def|class)\s+$)"))) continue;
        CallRelation rel;
        rel.caller = owner->fact;
        rel.callee_name = callee;
        rel.callee_resolved = resolve(owner->fact, callee);
        rel.call_site_line = line_no;
        relations.push_back(std::move(rel));
      }
    }
  }
  return relations;
}

// Intraprocedural, over-approximate propagation summary. Direct assignments
// and direct call-argument passes are never dropped; default parameter values
// produce `parameter` edges; returns produce edges into the synthetic
// `return` symbol.
inline DataFlowSummary analyze_data_flow(const RepoCheckout& checkout,
                                         const FunctionFact& function) {
  DataFlowSummary summary;
  summary.function = function;

  std::string text;
  try {
    text = read_checkout_file(checkout, function.file);
  } catch (const Error&) {
    summary.unparsed = true;
    return summary;
  }
  if (detail::looks_binary(text)) {
    summary.unparsed = true;
    return summary;
  }
  auto lines = util::split_lines(text);
  if (function.start_line < 1 || function.end_line > static_cast<int>(lines.size()) ||
      function.start_line > function.end_line) {
    summary.unparsed = true;
    return summary;
  }
  std::vector<std::string> span(lines.begin() + (function.start_line - 1),
                                lines.begin() + function.end_line);
  auto scanned = detail::scan_lines(span);

  auto add_edge = [&](const std::string& from, const std::string& to, FlowVia via) {
    DataFlowEdge e{from, to, via};
    if (std::find(summary.edges.begin(), summary.edges.end(), e) == summary.edges.end())
      summary.edges.push_back(e);
  };

  static const std::regex def_header(R"(^\s*(?:async\s+)?def\s+[A-Za-z_]\w*\s*\(([^)]*)\))");
  static const std::regex assign_re(R"(^\s*([A-Za-z_]\w*(?:\s*,\s*[A-Za-z_]\w*)*)\s*[+\-*/]?=\s*(?!=)(.+))");
  static const std::regex return_re(R"(^\s*return\b\s*(.*))");

  bool header_done = false;
  for (const auto& sl : scanned) {
    if (sl.blank || sl.inside_string) continue;
    const std::string& code = sl.code;
    std::smatch m;

    if (!header_done && std::regex_search(code, m, def_header)) {
      header_done = true;
      std::string params = m[1].str();
      std::size_t start = 0;
      while (start < params.size()) {
        std::size_t comma = params.find(',', start);
        std::string item = util::trim(params.substr(0, comma == std::string::npos
                                                            ? std::string::npos
                                                            : comma) .substr(start));
        std::size_t eq = item.find('=');
        if (eq != std::string::npos) {
          std::string pname = util::trim(item.substr(0, eq));
          for (const auto& src : detail::expr_identifiers(item.substr(eq + 1)))
            add_edge(src, pname, FlowVia::parameter);
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      continue;
    }

    if (std::regex_search(code, m, return_re)) {
      std::string expr = util::trim(m[1].str());
      if (expr.empty()) continue;
      auto idents = detail::expr_identifiers(expr);
      if (idents.empty()) {
        add_edge(util::trim(expr), "return", FlowVia::ret);
      } else {
        for (const auto& id : idents) add_edge(id, "return", FlowVia::ret);
      }
      // calls inside the return expression still pass arguments
      auto cbegin = std::sregex_iterator(expr.begin(), expr.end(), detail::call_re());
      for (auto it = cbegin; it != std::sregex_iterator(); ++it) {
        std::string callee = (*it)[1].str();
        if (detail::python_keywords().count(callee.substr(0, callee.find('.')))) continue;
        auto open = static_cast<std::size_t>(it->position(0)) + it->length(0);
        std::size_t close = expr.find(')', open);
        std::string args = expr.substr(open, close == std::string::npos ? std::string::npos
                                                                        : close - open);
        for (const auto& arg : detail::expr_identifiers(args))
          if (arg != callee) add_edge(arg, callee, FlowVia::call_argument);
      }
      continue;
    }

    bool assigned = false;
    if (std::regex_search(code, m, assign_re)) {
      std::string targets = m[1].str();
      std::string expr = m[2].str();
      if (expr.find("==") != 0) {
        assigned = true;
        std::vector<std::string> target_names;
        std::size_t start = 0;
        while (start < targets.size()) {
          std::size_t comma = targets.find(',', start);
          target_names.push_back(util::trim(targets.substr(start, comma - start)));
          if (comma == std::string::npos) break;
          start = comma + 1;
        }
        for (const auto& tgt : target_names)
          for (const auto& src : detail::expr_identifiers(expr))
            if (src != tgt) add_edge(src, tgt, FlowVia::assignment);
      }
    }

    // call-argument edges on any statement line (assignment RHS included)
    std::string expr_part = assigned ? m[2].str() : code;
    auto cbegin = std::sregex_iterator(expr_part.begin(), expr_part.end(), detail::call_re());
    for (auto it = cbegin; it != std::sregex_iterator(); ++it) {
      std::string callee = (*it)[1].str();
      if (detail::python_keywords().count(callee.substr(0, callee.find('.')))) continue;
      auto open = static_cast<std::size_t>(it->position(0)) + it->length(0);
      std::size_t close = expr_part.find(')', open);
      std::string args =
          expr_part.substr(open, close == std::string::npos ? std::string::npos : close - open);
      for (const auto& arg : detail::expr_identifiers(args))
        if (arg != callee) add_edge(arg, callee, FlowVia::call_argument);
    }
  }
  return summary;
}

// SARIF 2.1.0 ingestion: one entry per result, locations repo-relative.
inline std::vector<SarifResult> ingest_sarif(const fs::path& path) {
  std::string text = util::read_text_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::format, std::string("malformed SARIF document: ") + e.what());
  }
  if (!doc.is_object()) throw Error(Errc::format, "malformed SARIF: root is not an object");
  if (!doc.contains("runs")) throw Error(Errc::format, "malformed SARIF: missing member 'runs'");
  if (!doc["runs"].is_array()) throw Error(Errc::format, "malformed SARIF: 'runs' is not an array");

  std::vector<SarifResult> out;
  for (const auto& run : doc["runs"]) {
    if (!run.is_object()) throw Error(Errc::format, "malformed SARIF: run entry is not an object");
    if (!run.contains("results")) continue;
    if (!run["results"].is_array())
      throw Error(Errc::format, "malformed SARIF: 'results' is not an array");
    for (const auto& result : run["results"]) {
      SarifResult r;
      r.rule_id = result.value("ruleId", "");
      if (result.contains("message")) {
        if (!result["message"].is_object() || !result["message"].contains("text"))
          throw Error(Errc::format, "malformed SARIF: missing member 'message.text'");
        r.message = result["message"]["text"].get<std::string>();
      }
      if (result.contains("locations") && result["locations"].is_array() &&
          !result["locations"].empty()) {
        const auto& loc = result["locations"][0];
        if (!loc.contains("physicalLocation"))
          throw Error(Errc::format, "malformed SARIF: missing member 'physicalLocation'");
        const auto& phys = loc["physicalLocation"];
        if (phys.contains("artifactLocation") && phys["artifactLocation"].contains("uri")) {
          std::string uri = phys["artifactLocation"]["uri"].get<std::string>();
          if (uri.starts_with("file:///")) uri = uri.substr(8);
          if (uri.starts_with("./")) uri = uri.substr(2);
          r.file = uri;
        }
        if (phys.contains("region") && phys["region"].contains("startLine"))
          r.line = phys["region"]["startLine"].get<int>();
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace refaudit::code_facts
