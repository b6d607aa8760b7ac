#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace testsupport {

/// Root of the checked-in fixtures.
std::filesystem::path fixtures_dir();

struct GoldenResult {
    std::string name;
    std::string expected;
    std::string actual;
};

/// Verdict replies with no clear yes/no conclusion, generated from a fixed seed.
std::vector<std::string> fuzzed_ambiguous_replies(std::size_t n, unsigned seed);

/// Replies that carry no valid "Score: X" line, generated from a fixed seed.
std::vector<std::string> fuzzed_malformed_scores(std::size_t n, unsigned seed);

/// Renders every case in prompts/cases.json with the default prompt kit.
std::vector<GoldenResult> render_golden_cases();

}  // namespace testsupport
