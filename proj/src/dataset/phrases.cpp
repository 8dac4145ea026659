#include <sstream>

#include "egohome/core/io.hpp"
#include "egohome/dataset/dataset.hpp"

namespace egohome::dataset {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

SynonymTable SynonymTable::from_file(const std::string& path) {
    SynonymTable t;
    std::istringstream lines(read_text_file(path));
    std::string line;
    while (std::getline(lines, line)) {
        const std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        const size_t colon = s.find(':');
        EGO_CHECK(colon != std::string::npos, "synonym table: bad line '%s'", s.c_str());
        const auto verb = microhome::verb_from_name(trim(s.substr(0, colon)));
        EGO_CHECK(verb.has_value(), "synonym table: unknown verb in '%s'", s.c_str());
        std::istringstream syns(s.substr(colon + 1));
        std::string syn;
        while (std::getline(syns, syn, '|')) {
            syn = trim(syn);
            if (!syn.empty()) t.table_[size_t(*verb)].push_back(syn);
        }
    }
    for (int v = 0; v < microhome::kNumVerbs; ++v)
        EGO_CHECK(!t.table_[size_t(v)].empty(), "synonym table: no synonyms for %s",
                  microhome::verb_name(microhome::Verb(v)));
    return t;
}

const SynonymTable& SynonymTable::instance() {
    static const SynonymTable table = from_file(std::string(EGOHOME_RESOURCE_DIR) + "/verb_synonyms.txt");
    return table;
}

std::optional<Verb> SynonymTable::verb_of(const std::string& phrase_verb) const {
    if (auto v = microhome::verb_from_name(phrase_verb)) return v;
    for (int v = 0; v < microhome::kNumVerbs; ++v)
        for (const auto& syn : table_[size_t(v)])
            if (syn == phrase_verb) return Verb(v);
    return std::nullopt;
}

std::optional<Verb> SynonymTable::verb_in_text(const std::string& text) const {
    std::string t = text;
    for (const char* prefix : {"next timestep:", "the goal state:"}) {
        if (t.rfind(prefix, 0) == 0) {
            t = trim(t.substr(std::string(prefix).size()));
            break;
        }
    }
    // Longest matching synonym wins ("switch on" before "sit"); canonical
    // snake_case ids are accepted too.
    std::optional<Verb> best;
    size_t best_len = 0;
    auto consider = [&](const std::string& syn, Verb v) {
        if (syn.size() <= best_len) return;
        if (t.rfind(syn, 0) == 0 && (t.size() == syn.size() || t[syn.size()] == ' ')) {
            best = v;
            best_len = syn.size();
        }
    };
    for (int v = 0; v < microhome::kNumVerbs; ++v) {
        consider(microhome::verb_name(Verb(v)), Verb(v));
        for (const auto& syn : table_[size_t(v)]) consider(syn, Verb(v));
    }
    return best;
}

PromptRecord make_phrases(const Skill& skill, const std::optional<std::string>& object_name,
                          uint64_t template_seed, const SynonymTable& table) {
    EGO_CHECK(object_name.has_value() == microhome::verb_needs_target(skill.verb),
              "make_phrases: object name must be present iff the verb takes one (%s)",
              microhome::verb_name(skill.verb));
    const auto& syns = table.synonyms(skill.verb);
    Rng rng(Rng::derive(template_seed, {uint64_t(skill.verb), 0x9A7A5E}));
    const std::string& verb = syns[size_t(rng.uniform_int(int(syns.size())))];
    PromptRecord rec;
    if (object_name) {
        rec.next_phrase = "next timestep: " + verb + " the " + *object_name;
        rec.goal_phrase = "the goal state: " + verb + " " + *object_name;
    } else {
        rec.next_phrase = "next timestep: " + verb;
        rec.goal_phrase = "the goal state: " + verb;
    }
    return rec;
}

}  // namespace egohome::dataset
