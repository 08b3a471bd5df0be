/*
 * Copyright 2026 The recoverr Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/** @file world.hpp
 *
 * Synthetic worlds: a fixed catalog of base attributes (what a vision model
 * can observe directly) and derived attributes (functions of base ones), a
 * rigid statement grammar over them, and exact entailment by enumeration.
 *
 * Statements read `attr = value.` or `attr ≠ value.` (`!=` is accepted).
 * Set values are written `{blue, red}` with members sorted.
 */

#ifndef RECOVERR_SIM_WORLD_HPP_
#define RECOVERR_SIM_WORLD_HPP_

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "recoverr/error.hpp"

namespace recoverr::sim {

using Facts = std::map<std::string, std::string>;

struct BaseAttribute {
  std::string name;
  std::string question;
  std::vector<std::string> domain;
  bool set_valued = false;
};

struct DerivedAttribute {
  std::string name;
  std::string question;
  std::vector<std::string> domain;
  std::vector<std::string> depends_on;  // base attributes only
  std::function<std::string(const Facts&)> rule;
};

/// Canonical "{a, b}" form with sorted members.
inline std::string set_value(std::vector<std::string> members) {
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  std::string out = "{";
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (i > 0) out += ", ";
    out += members[i];
  }
  return out + "}";
}

inline std::vector<std::string> set_members(std::string_view value) {
  std::vector<std::string> out;
  if (value.size() < 2 || value.front() != '{' || value.back() != '}') return out;
  value = value.substr(1, value.size() - 2);
  std::size_t start = 0;
  while (start <= value.size()) {
    std::size_t end = value.find(',', start);
    if (end == std::string_view::npos) end = value.size();
    std::string_view item = value.substr(start, end - start);
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.front()))) item.remove_prefix(1);
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.back()))) item.remove_suffix(1);
    if (!item.empty()) out.emplace_back(item);
    start = end + 1;
  }
  return out;
}

class Catalog {
 public:
  static const Catalog& standard() {
    static const Catalog catalog = build_standard();
    return catalog;
  }

  const std::vector<BaseAttribute>& base() const { return base_; }
  const std::vector<DerivedAttribute>& derived() const { return derived_; }

  const BaseAttribute* find_base(std::string_view name) const {
    for (const auto& a : base_) {
      if (a.name == name) return &a;
    }
    return nullptr;
  }

  const DerivedAttribute* find_derived(std::string_view name) const {
    for (const auto& a : derived_) {
      if (a.name == name) return &a;
    }
    return nullptr;
  }

  bool known(std::string_view name) const { return find_base(name) || find_derived(name); }

  const std::vector<std::string>& domain(std::string_view name) const {
    if (const auto* b = find_base(name)) return b->domain;
    if (const auto* d = find_derived(name)) return d->domain;
    throw InvalidInput("unknown attribute '" + std::string(name) + "'");
  }

  /// Base attributes a statement about `name` constrains.
  std::vector<std::string> dependencies(std::string_view name) const {
    if (find_base(name)) return {std::string(name)};
    if (const auto* d = find_derived(name)) return d->depends_on;
    throw InvalidInput("unknown attribute '" + std::string(name) + "'");
  }

  /// Base attributes that feed no derived attribute.
  std::vector<std::string> distractor_attributes() const {
    std::set<std::string> used;
    for (const auto& d : derived_) used.insert(d.depends_on.begin(), d.depends_on.end());
    std::vector<std::string> out;
    for (const auto& b : base_) {
      if (!used.count(b.name)) out.push_back(b.name);
    }
    return out;
  }

  /// Attribute asked about by a question, if any.
  std::optional<std::string> attribute_for(std::string_view question) const {
    for (const auto& a : base_) {
      if (a.question == question) return a.name;
    }
    for (const auto& a : derived_) {
      if (a.question == question) return a.name;
    }
    return std::nullopt;
  }

  const std::string& question_for(std::string_view name) const {
    if (const auto* b = find_base(name)) return b->question;
    if (const auto* d = find_derived(name)) return d->question;
    throw InvalidInput("unknown attribute '" + std::string(name) + "'");
  }

  /// Value of any attribute under an assignment of the base attributes.
  std::string evaluate(std::string_view name, const Facts& base) const {
    if (find_base(name)) {
      const auto it = base.find(std::string(name));
      if (it == base.end()) throw InvalidInput("unassigned attribute '" + std::string(name) + "'");
      return it->second;
    }
    if (const auto* d = find_derived(name)) return d->rule(base);
    throw InvalidInput("unknown attribute '" + std::string(name) + "'");
  }

  /// Base facts extended with every derived attribute.
  Facts complete(const Facts& base) const {
    Facts all = base;
    for (const auto& d : derived_) all[d.name] = d.rule(base);
    return all;
  }

  /// Canonical spelling of a value in the attribute's domain, if present.
  std::optional<std::string> canonical_value(std::string_view name, std::string_view value) const {
    const auto& dom = domain(name);
    std::string v(value);
    if (const auto* b = find_base(name); b && b->set_valued) v = set_value(set_members(value));
    if (std::find(dom.begin(), dom.end(), v) != dom.end()) return v;
    return std::nullopt;
  }

 private:
  static Catalog build_standard();

  std::vector<BaseAttribute> base_;
  std::vector<DerivedAttribute> derived_;
};

namespace detail {

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> colors = {"black", "blue", "green", "red", "white", "yellow"};
  return colors;
}

// Every 1-, 2- and 3-color subset of the palette.
inline std::vector<std::string> color_sets() {
  const auto& p = palette();
  std::vector<std::string> out;
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i) out.push_back(set_value({p[i]}));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) out.push_back(set_value({p[i], p[j]}));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      for (std::size_t k = j + 1; k < n; ++k) out.push_back(set_value({p[i], p[j], p[k]}));
    }
  }
  return out;
}

inline std::string flag_of(const std::string& colors) {
  static const std::vector<std::pair<std::string, std::string>> flags = {
      {"uk", set_value({"blue", "red", "white"})},
      {"sweden", set_value({"blue", "yellow"})},
      {"italy", set_value({"green", "red", "white"})},
      {"japan", set_value({"red", "white"})},
      {"germany", set_value({"black", "red", "yellow"})},
  };
  for (const auto& [country, set] : flags) {
    if (set == colors) return country;
  }
  return "none";
}

}  // namespace detail

inline Catalog Catalog::build_standard() {
  Catalog c;
  const std::vector<std::string> yes_no = {"no", "yes"};
  const auto colors = detail::color_sets();

  c.base_ = {
      {"floor_tile_colors", "What colors are the floor tiles?", colors, true},
      {"bus_colors", "What colors is the bus painted?", colors, true},
      {"kite_colors", "What colors is the kite?", colors, true},
      {"shirt_colors", "What colors is the shirt?", colors, true},
      {"has_meat", "Are there any meat items on the plate?", yes_no, false},
      {"has_vegetables", "Are there vegetables on the plate?", yes_no, false},
      {"is_outdoors", "Is the scene outdoors?", yes_no, false},
      {"is_sunny", "Is it sunny?", yes_no, false},
      {"has_snow", "Is there snow on the ground?", yes_no, false},
      {"has_water", "Is there a body of water?", yes_no, false},
      {"animal_type", "What animal is shown?", {"cat", "cow", "dog", "horse", "sheep"}, false},
      {"room_type", "What type of room is this?", {"bathroom", "bedroom", "kitchen", "living room"}, false},
      // Observable but unused by any rule.
      {"wall_color", "What color is the wall?", detail::palette(), false},
      {"has_clock", "Is there a clock?", yes_no, false},
      {"has_window", "Is there a window?", yes_no, false},
      {"has_person", "Is there a person?", yes_no, false},
      {"time_of_day", "What time of day is it?", {"afternoon", "evening", "morning"}, false},
      {"table_material", "What is the table made of?", {"glass", "metal", "stone", "wood"}, false},
  };

  const auto count_rule = [](std::string attr) {
    return [attr](const Facts& f) { return std::to_string(set_members(f.at(attr)).size()); };
  };
  const std::vector<std::string> counts = {"1", "2", "3"};

  c.derived_ = {
      {"floor_tile_colors_count", "How many colors are the floor tiles?", counts,
       {"floor_tile_colors"}, count_rule("floor_tile_colors")},
      {"kite_colors_count", "How many colors does the kite have?", counts, {"kite_colors"},
       count_rule("kite_colors")},
      {"shirt_colors_count", "How many colors does the shirt have?", counts, {"shirt_colors"},
       count_rule("shirt_colors")},
      {"bus_flag", "Which country's flag has the same colors as the bus?",
       {"germany", "italy", "japan", "none", "sweden", "uk"}, {"bus_colors"},
       [](const Facts& f) { return detail::flag_of(f.at("bus_colors")); }},
      {"diet", "What kind of diet is this meal suited for?", {"meat lover", "snack", "vegetarian"},
       {"has_meat", "has_vegetables"},
       [](const Facts& f) -> std::string {
         if (f.at("has_meat") == "yes") return "meat lover";
         return f.at("has_vegetables") == "yes" ? "vegetarian" : "snack";
       }},
      {"picnic_weather", "Is this a good day for a picnic?", yes_no,
       {"is_outdoors", "is_sunny", "has_snow"},
       [](const Facts& f) -> std::string {
         const bool good = f.at("is_outdoors") == "yes" && f.at("is_sunny") == "yes" &&
                           f.at("has_snow") == "no";
         return good ? "yes" : "no";
       }},
      {"activity", "What activity could people do here?", {"skiing", "swimming", "walking"},
       {"has_snow", "has_water"},
       [](const Facts& f) -> std::string {
         if (f.at("has_snow") == "yes") return "skiing";
         return f.at("has_water") == "yes" ? "swimming" : "walking";
       }},
      {"animal_sound", "What sound does this animal make?", {"baa", "bark", "meow", "moo", "neigh"},
       {"animal_type"},
       [](const Facts& f) -> std::string {
         static const std::map<std::string, std::string> sounds = {
             {"cat", "meow"}, {"cow", "moo"}, {"dog", "bark"}, {"horse", "neigh"}, {"sheep", "baa"}};
         return sounds.at(f.at("animal_type"));
       }},
      {"room_purpose", "What is this room mainly used for?",
       {"bathing", "cooking", "relaxing", "sleeping"}, {"room_type"},
       [](const Facts& f) -> std::string {
         static const std::map<std::string, std::string> uses = {{"bathroom", "bathing"},
                                                                {"bedroom", "sleeping"},
                                                                {"kitchen", "cooking"},
                                                                {"living room", "relaxing"}};
         return uses.at(f.at("room_type"));
       }},
  };
  return c;
}

// ---------------------------------------------------------------------------
// Statements

struct Assertion {
  std::string attribute;
  bool negated = false;
  std::string value;

  friend bool operator==(const Assertion&, const Assertion&) = default;
};

inline std::string format_assertion(const Assertion& a) {
  return a.attribute + (a.negated ? " \xE2\x89\xA0 " : " = ") + a.value + ".";
}

/// Parses one statement. Returns nullopt for text outside the grammar or
/// values outside the attribute's domain.
inline std::optional<Assertion> parse_assertion(std::string_view text,
                                                const Catalog& catalog = Catalog::standard()) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  text = trim(text);
  if (!text.empty() && text.back() == '.') text.remove_suffix(1);
  Assertion a;
  std::size_t op = std::string_view::npos;
  std::size_t op_len = 0;
  if (auto p = text.find("\xE2\x89\xA0"); p != std::string_view::npos) {
    op = p;
    op_len = 3;
    a.negated = true;
  } else if (auto q = text.find("!="); q != std::string_view::npos) {
    op = q;
    op_len = 2;
    a.negated = true;
  } else if (auto e = text.find('='); e != std::string_view::npos) {
    op = e;
    op_len = 1;
  }
  if (op == std::string_view::npos) return std::nullopt;
  a.attribute = std::string(trim(text.substr(0, op)));
  if (!catalog.known(a.attribute)) return std::nullopt;
  auto value = catalog.canonical_value(a.attribute, trim(text.substr(op + op_len)));
  if (!value) return std::nullopt;
  a.value = *value;
  return a;
}

/// Splits a premise on sentence-final periods.
inline std::vector<std::string> split_statements(std::string_view premise) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < premise.size()) {
    std::size_t end = premise.find('.', start);
    if (end == std::string_view::npos) end = premise.size();
    std::string_view s = premise.substr(start, end - start);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    if (!s.empty()) out.emplace_back(std::string(s) + ".");
    start = end + 1;
  }
  return out;
}

/// Logical complement within the attribute's domain: `=` and `≠` swap.
inline std::string exact_negate(std::string_view statement,
                                const Catalog& catalog = Catalog::standard()) {
  auto a = parse_assertion(statement, catalog);
  if (!a) throw InvalidInput("exact_negate: unparseable statement '" + std::string(statement) + "'");
  a->negated = !a->negated;
  return format_assertion(*a);
}

inline bool holds(const Assertion& a, const Facts& base, const Catalog& catalog) {
  return (catalog.evaluate(a.attribute, base) == a.value) != a.negated;
}

struct NliStats {
  std::size_t unparseable = 0;
};

/// 1 if the premise statements force the hypothesis under the catalog's
/// rules, 0 if they force its negation, 0.5 otherwise. Also 0.5 for an empty
/// or inconsistent premise and for unparseable input. Premise statements
/// sharing no base attribute with the hypothesis (even transitively) do not
/// take part.
inline double exact_nli(const std::vector<std::string>& premise, std::string_view hypothesis,
                        const Catalog& catalog = Catalog::standard(), NliStats* stats = nullptr) {
  if (premise.empty()) return 0.5;
  const auto h = parse_assertion(hypothesis, catalog);
  if (!h) {
    if (stats) ++stats->unparseable;
    return 0.5;
  }
  std::vector<Assertion> facts;
  for (const auto& s : premise) {
    auto a = parse_assertion(s, catalog);
    if (!a) {
      if (stats) ++stats->unparseable;
      return 0.5;
    }
    facts.push_back(std::move(*a));
  }

  std::set<std::string> vars;
  for (auto& d : catalog.dependencies(h->attribute)) vars.insert(std::move(d));
  std::vector<bool> used(facts.size(), false);
  for (bool grew = true; grew;) {
    grew = false;
    for (std::size_t i = 0; i < facts.size(); ++i) {
      if (used[i]) continue;
      const auto deps = catalog.dependencies(facts[i].attribute);
      const bool touches =
          std::any_of(deps.begin(), deps.end(), [&](const auto& d) { return vars.count(d) > 0; });
      if (!touches) continue;
      used[i] = true;
      grew = true;
      vars.insert(deps.begin(), deps.end());
    }
  }
  std::vector<const Assertion*> relevant;
  for (std::size_t i = 0; i < facts.size(); ++i) {
    if (used[i]) relevant.push_back(&facts[i]);
  }

  const std::vector<std::string> names(vars.begin(), vars.end());
  std::vector<const std::vector<std::string>*> domains;
  double combos = 1.0;
  for (const auto& n : names) {
    domains.push_back(&catalog.domain(n));
    combos *= static_cast<double>(domains.back()->size());
  }
  if (combos > 4e6) return 0.5;

  std::vector<std::size_t> idx(names.size(), 0);
  Facts assignment;
  bool any_true = false;
  bool any_false = false;
  for (;;) {
    for (std::size_t v = 0; v < names.size(); ++v) assignment[names[v]] = (*domains[v])[idx[v]];
    const bool consistent = std::all_of(relevant.begin(), relevant.end(),
                                        [&](const Assertion* a) { return holds(*a, assignment, catalog); });
    if (consistent) {
      (holds(*h, assignment, catalog) ? any_true : any_false) = true;
      if (any_true && any_false) return 0.5;
    }
    std::size_t v = 0;
    while (v < names.size() && ++idx[v] == domains[v]->size()) idx[v++] = 0;
    if (v == names.size()) break;
  }
  if (any_true && !any_false) return 1.0;
  if (any_false && !any_true) return 0.0;
  return 0.5;
}

}  // namespace recoverr::sim

#endif  // RECOVERR_SIM_WORLD_HPP_
