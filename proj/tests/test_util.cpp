#include <doctest.h>

#include "tsb/util.hpp"

using namespace tsb;

TEST_CASE("sha256 known vector") {
    CHECK(sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("one changed character changes the hash") {
    CHECK(sha256_hex("prompt a") != sha256_hex("prompt b"));
}

TEST_CASE("fnv1a64 is stable") {
    // Frozen so seeds never drift between builds.
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("abc") != fnv1a64("acb"));
}

TEST_CASE("timestamp formatting matches the activity-line style") {
    // 2004-05-15T16:00:00Z
    CHECK(format_timestamp(1084636800) == "Sat 05/15/2004 4PM");
    // midnight and noon edge cases
    CHECK(format_timestamp(0) == "Thu 01/01/1970 12AM");
    CHECK(format_timestamp(12 * 3600) == "Thu 01/01/1970 12PM");
}

TEST_CASE("tokenize lowercases and splits on non-alphanumerics") {
    auto toks = tokenize("Hello, World! it's 42");
    CHECK(toks == std::vector<std::string>{"hello", "world", "it", "s", "42"});
    CHECK(tokenize("...").empty());
}

TEST_CASE("word_count counts whitespace-separated tokens") {
    CHECK(word_count("") == 0);
    CHECK(word_count("one") == 1);
    CHECK(word_count("  a\tb\nc  ") == 3);
}

TEST_CASE("trim") {
    CHECK(trim("  x  ") == "x");
    CHECK(trim("\n\t") == "");
}
