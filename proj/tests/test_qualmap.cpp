// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "qdr/degrade.hpp"
#include "qdr/errors.hpp"
#include "qdr/qualmap.hpp"
#include "qdr/rng.hpp"

using namespace qdr;

namespace {

Image constant_image(int h, int w, float v) { return Image(h, w, 3, v); }

Image random_image(std::uint64_t seed, int h, int w) {
    Rng rng(seed);
    Image img(h, w, 3);
    for (float& v : img.data) v = static_cast<float>(rng.uniform());
    return img;
}

Image full_mask(int h, int w, float v = 1.0f) { return Image(h, w, 1, v); }

/// Counts scorer invocations (score_one and score_many each count once).
class CountingScorer final : public QualityScorer {
public:
    explicit CountingScorer(const QualityScorer& inner) : inner_(inner) {}
    std::string scorer_id() const override { return inner_.scorer_id(); }
    Mode mode() const override { return inner_.mode(); }
    QualityMap score_one(const std::string& key, const Image& image) const override {
        ++calls;
        return inner_.score_one(key, image);
    }
    std::vector<QualityMap> score_many(const std::vector<BatchItem>& items) const override {
        ++calls;
        batch_sizes.push_back(items.size());
        return inner_.score_many(items);
    }
    mutable int calls = 0;
    mutable std::vector<std::size_t> batch_sizes;

private:
    const QualityScorer& inner_;
};

} // namespace

TEST_SUITE("qualmap") {
    TEST_CASE("uniform input yields a spatially uniform map") {
        const QualityMap m = score_no_reference(constant_image(24, 24, 0.5f));
        for (float v : m.values) CHECK(v == m.values[0]);
    }

    TEST_CASE("no-reference scoring is deterministic and in range") {
        const Image img = random_image(11, 32, 20);
        const QualityMap a = score_no_reference(img);
        const QualityMap b = score_no_reference(img);
        CHECK(a == b);
        for (float v : a.values) {
            CHECK(v >= kQualityMin);
            CHECK(v <= kQualityMax);
        }
    }

    TEST_CASE("zero-amplitude perturbation leaves the map unchanged") {
        const Image img = random_image(12, 24, 24);
        Image same = img;
        for (float& v : same.data) v += 0.0f;
        CHECK(score_no_reference(img) == score_no_reference(same));
    }

    TEST_CASE("non-finite pixels are rejected") {
        Image img = constant_image(16, 16, 0.5f);
        img.at(3, 4, 1) = std::numeric_limits<float>::quiet_NaN();
        CHECK_THROWS_AS(score_no_reference(img), InvalidInput);
    }

    TEST_CASE("dense haze lowers in-mask score vs clean area") {
        const Image clean = gen_clean(505, 48);
        DegradationSpec spec;
        spec.seed = 505;
        DegradationComponent comp;
        comp.kind = DegradationKind::kHaze;
        comp.severity = 0.8f;
        comp.mask = full_mask(48, 48, 0.0f);
        // Dense mask over the left 60% of the image.
        for (int y = 0; y < 48; ++y)
            for (int x = 0; x < 29; ++x) comp.mask.at(y, x, 0) = 1.0f;
        spec.components.push_back(comp);
        const DegradedSample sample = apply_degradations(clean, spec);
        const QualityMap m = score_no_reference(sample.degraded);
        const auto [inside, outside] = mask_mean_split(m, spec.components[0].mask);
        CHECK(inside < outside);
    }

    TEST_CASE("mask separation holds per sample for both scorers over seeded samples") {
        // Cycles through all 11 categories; every sample must separate.
        for (int i = 0; i < 22; ++i) {
            const std::string category = category_names()[i % category_names().size()];
            const DegradedSample s = make_sample(9000, i, 48, category);
            Image mask_union(48, 48, 1, 0.0f);
            for (const auto& comp : s.spec.components)
                for (std::size_t p = 0; p < mask_union.data.size(); ++p)
                    if (comp.mask.data[p] > 0.0f) mask_union.data[p] = 1.0f;

            const QualityMap noref = score_no_reference(s.degraded);
            const auto [nin, nout] = mask_mean_split(noref, mask_union);
            CAPTURE(category);
            CAPTURE(i);
            CHECK(nin < nout);

            const QualityMap fullref = score_full_reference(s.degraded, s.clean);
            const auto [fin, fout] = mask_mean_split(fullref, mask_union);
            CHECK(fin < fout);
        }
    }

    TEST_CASE("full reference of identical images is exactly 5") {
        const Image img = random_image(21, 24, 24);
        const QualityMap m = score_full_reference(img, img);
        for (float v : m.values) CHECK(v == 5.0f);
    }

    TEST_CASE("full reference vs negative scores below 3 on a high-contrast pattern") {
        Image img(24, 24, 3);
        for (int y = 0; y < 24; ++y)
            for (int x = 0; x < 24; ++x)
                for (int c = 0; c < 3; ++c) img.at(y, x, c) = ((x / 4 + y / 4) % 2) ? 0.9f : 0.1f;
        Image neg = img;
        for (float& v : neg.data) v = 1.0f - v;
        const QualityMap m = score_full_reference(neg, img);
        double mean = 0.0;
        for (float v : m.values) mean += v;
        mean /= static_cast<double>(m.values.size());
        CHECK(mean < 3.0);
    }

    TEST_CASE("noise mix scores between identity and negation") {
        Image img(24, 24, 3);
        for (int y = 0; y < 24; ++y)
            for (int x = 0; x < 24; ++x)
                for (int c = 0; c < 3; ++c) img.at(y, x, c) = ((x / 4 + y / 4) % 2) ? 0.9f : 0.1f;
        Rng rng(31);
        Image mixed = img;
        for (float& v : mixed.data)
            v = 0.5f * v + 0.5f * static_cast<float>(rng.uniform());
        Image neg = img;
        for (float& v : neg.data) v = 1.0f - v;

        const auto mean_of = [](const QualityMap& m) {
            double s = 0.0;
            for (float v : m.values) s += v;
            return s / static_cast<double>(m.values.size());
        };
        const double m_id = mean_of(score_full_reference(img, img));
        const double m_mix = mean_of(score_full_reference(mixed, img));
        const double m_neg = mean_of(score_full_reference(neg, img));
        CHECK(m_neg < m_mix);
        CHECK(m_mix < m_id);
    }

    TEST_CASE("full reference rejects shape mismatch") {
        CHECK_THROWS_AS(score_full_reference(constant_image(8, 8, 0.5f), constant_image(8, 9, 0.5f)),
                        InvalidInput);
    }

    TEST_CASE("cache hit skips the scorer") {
        NoReferenceProxyScorer base;
        CountingScorer scorer(base);
        QualityCache cache(16);
        const Image img = random_image(41, 20, 20);
        const QualityMap first = cache.get_or_score("a", img, scorer);
        CHECK(scorer.calls == 1);
        CHECK(cache.hit_count() == 0);
        CHECK(cache.miss_count() == 1);
        const QualityMap second = cache.get_or_score("a", img, scorer);
        CHECK(scorer.calls == 1);
        CHECK(cache.hit_count() == 1);
        CHECK(first == second);
    }

    TEST_CASE("LRU capacity 1: A then B then A scores three times") {
        NoReferenceProxyScorer base;
        CountingScorer scorer(base);
        QualityCache cache(1);
        const Image a = random_image(1, 16, 16);
        const Image b = random_image(2, 16, 16);
        cache.get_or_score("A", a, scorer);
        cache.get_or_score("B", b, scorer);
        cache.get_or_score("A", a, scorer);
        CHECK(scorer.calls == 3);
        CHECK(cache.miss_count() == 3);
        CHECK(cache.hit_count() == 0);
    }

    TEST_CASE("batch scores misses in a single invocation") {
        NoReferenceProxyScorer base;
        CountingScorer scorer(base);
        QualityCache cache(16);
        const Image i0 = random_image(50, 16, 16), i1 = random_image(51, 16, 16),
                    i2 = random_image(52, 16, 16), i3 = random_image(53, 16, 16);
        cache.get_or_score("k0", i0, scorer);
        cache.get_or_score("k2", i2, scorer);
        scorer.calls = 0;
        scorer.batch_sizes.clear();

        const std::vector<QualityScorer::BatchItem> items = {
            {"k0", &i0}, {"k1", &i1}, {"k2", &i2}, {"k3", &i3}};
        const auto maps = cache.score_batch(items, scorer);
        CHECK(scorer.calls == 1);
        REQUIRE(scorer.batch_sizes.size() == 1);
        CHECK(scorer.batch_sizes[0] == 2);
        REQUIRE(maps.size() == 4);
        CHECK(maps[1] == score_no_reference(i1));
    }

    TEST_CASE("empty batch performs no scorer call") {
        NoReferenceProxyScorer base;
        CountingScorer scorer(base);
        QualityCache cache(4);
        CHECK(cache.score_batch({}, scorer).empty());
        CHECK(scorer.calls == 0);
    }

    TEST_CASE("duplicate batch keys are rejected") {
        NoReferenceProxyScorer base;
        QualityCache cache(4);
        const Image img = random_image(60, 16, 16);
        const std::vector<QualityScorer::BatchItem> items = {{"dup", &img}, {"dup", &img}};
        CHECK_THROWS_AS(cache.score_batch(items, base), InvalidInput);
    }

    TEST_CASE("batch equals element-wise get_or_score") {
        NoReferenceProxyScorer base;
        QualityCache cache_a(8), cache_b(8);
        std::vector<Image> imgs;
        std::vector<QualityScorer::BatchItem> items;
        for (int i = 0; i < 5; ++i) imgs.push_back(random_image(70 + i, 16, 16));
        for (int i = 0; i < 5; ++i)
            items.push_back({"k" + std::to_string(i), &imgs[i]});
        const auto batched = cache_a.score_batch(items, base);
        for (int i = 0; i < 5; ++i) {
            const QualityMap seq = cache_b.get_or_score(items[i].key, imgs[i], base);
            CHECK(batched[i] == seq);
        }
    }

    TEST_CASE("cache is sound against a no-cache oracle on random call sequences") {
        NoReferenceProxyScorer base;
        Rng rng(333);
        for (int trial = 0; trial < 5; ++trial) {
            QualityCache cache(3);
            std::vector<Image> imgs;
            for (int k = 0; k < 6; ++k)
                imgs.push_back(random_image(1000 + trial * 10 + k, 12, 12));
            for (int call = 0; call < 40; ++call) {
                const int k = static_cast<int>(rng.uniform_int(0, 5));
                const QualityMap cached =
                    cache.get_or_score("key" + std::to_string(k), imgs[k], base);
                CHECK(cached == base.score_one("key" + std::to_string(k), imgs[k]));
            }
            CHECK(cache.hit_count() + cache.miss_count() == 40);
        }
    }

    TEST_CASE("aqmp round trip is bit exact") {
        QualityMap m(9, 13);
        Rng rng(91);
        for (float& v : m.values) v = static_cast<float>(rng.uniform(1.0, 5.0));
        const std::string path =
            (std::filesystem::temp_directory_path() / "qdr_test.aqmp").string();
        write_quality_map(path, m);
        const QualityMap back = read_quality_map(path);
        CHECK(back == m);
        std::remove(path.c_str());
    }

    TEST_CASE("aqmp rejects bad magic and truncation") {
        namespace fs = std::filesystem;
        const std::string path = (fs::temp_directory_path() / "qdr_test_bad.aqmp").string();
        {
            std::ofstream f(path, std::ios::binary);
            f << "NOPE";
        }
        CHECK_THROWS_WITH_AS(read_quality_map(path), doctest::Contains("offset 0"), FormatError);

        QualityMap m(4, 4);
        write_quality_map(path, m);
        fs::resize_file(path, 16 + 10); // header + partial payload
        CHECK_THROWS_AS(read_quality_map(path), FormatError);
        std::remove(path.c_str());
    }
}
