#include <catch_amalgamated.hpp>

#include "support/properties.hpp"

using namespace mdm;

namespace {

constexpr std::size_t kCases = 1000;

void require_clean(const test::PropertyReport& r) {
    INFO("worst " << r.worst << "; first failure: " << r.first_failure);
    CHECK(r.cases == kCases);
    CHECK(r.failures == 0);
}

}  // namespace

TEST_CASE("optical passivity under random drives", "[properties]") { require_clean(test::passivity_property(kCases)); }

TEST_CASE("reference-frame invariance of the output magnitude", "[properties]") {
    require_clean(test::frame_invariance_property(kCases));
}

TEST_CASE("linearity in the input field", "[properties]") { require_clean(test::field_linearity_property(kCases)); }

TEST_CASE("PRBS period and balance for random orders and seeds", "[properties]") {
    require_clean(test::prbs_property(kCases));
}

TEST_CASE("S11 passivity over random networks", "[properties]") { require_clean(test::s11_passivity_property(kCases)); }
