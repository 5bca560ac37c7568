import base64
import json

import httpx
import numpy as np
import pytest

from intentsearch.embedding import SyntheticEmbedder, SyntheticRecord
from intentsearch.errors import DimensionMismatch, EditorUnavailable, InvalidBox, SegmenterUnavailable
from intentsearch.index import normalize
from intentsearch import synth
from intentsearch.visual import (
    BoxFillSegmenter,
    RegionMask,
    RemoteEditProvider,
    RemoteSegmenter,
    StubEditProvider,
    combine_selected_elements,
    compose_change_preview,
    decode_png,
    encode_png,
    regularized_black_composite,
    segment,
    swap_element,
    visual_query_embedding,
    white_composite,
)


def gray(h, w, value=0):
    return np.full((h, w), value, dtype=np.uint8)


def mask_from_box(image, box):
    return BoxFillSegmenter().segment(image, box)


class TestSegment:
    def test_box_fill_sets_exactly_the_interior(self):
        image = gray(10, 10)
        mask = segment(image, (2, 2, 5, 5), BoxFillSegmenter())
        assert int(mask.bits.sum()) == 9
        assert mask.bits[2:5, 2:5].all()
        assert not mask.bits[0, 0]

    def test_full_box_is_all_ones(self):
        image = gray(10, 10)
        mask = segment(image, (0, 0, 10, 10), BoxFillSegmenter())
        assert mask.bits.all()

    def test_zero_width_box_rejected(self):
        with pytest.raises(InvalidBox):
            segment(gray(10, 10), (5, 5, 5, 9), BoxFillSegmenter())

    def test_out_of_bounds_box_rejected(self):
        with pytest.raises(InvalidBox):
            segment(gray(10, 10), (0, 0, 11, 4), BoxFillSegmenter())

    def test_remote_segmenter_wire_protocol(self):
        def handler(request):
            payload = json.loads(request.content)
            assert payload["box"] == [1, 1, 3, 3]
            image = decode_png(base64.b64decode(payload["image"]))
            mask = np.zeros(image.shape[:2], dtype=np.uint8)
            mask[1:3, 1:3] = 255
            return httpx.Response(
                200, json={"mask": base64.b64encode(encode_png(mask)).decode()}
            )

        segmenter = RemoteSegmenter(
            "http://sam.test", transport=httpx.MockTransport(handler)
        )
        mask = segmenter.segment(gray(6, 6, 40), (1, 1, 3, 3))
        assert int(mask.bits.sum()) == 4

    def test_remote_segmenter_unavailable(self):
        def handler(request):
            return httpx.Response(500)

        segmenter = RemoteSegmenter("http://sam.test", transport=httpx.MockTransport(handler))
        with pytest.raises(SegmenterUnavailable):
            segmenter.segment(gray(6, 6, 40), (1, 1, 3, 3))


class TestComposites:
    def test_outside_pixels_scaled_by_alpha1(self):
        image = gray(8, 8, 200)
        mask = mask_from_box(image, (0, 0, 4, 4))
        out = regularized_black_composite(image, mask, 0.9, 0.1)
        assert out[6, 6] == 20  # 0.1 * 200
        assert out[1, 1] == 200

    def test_all_ones_mask_is_identity(self):
        image = gray(8, 8, 123)
        mask = mask_from_box(image, (0, 0, 8, 8))
        assert np.array_equal(regularized_black_composite(image, mask), image)

    def test_rounding_half_up(self):
        image = gray(4, 4, 15)  # 0.1 * 15 = 1.5 -> 2
        mask = mask_from_box(image, (0, 0, 1, 1))
        out = regularized_black_composite(image, mask)
        assert out[3, 3] == 2

    def test_white_composite(self):
        image = gray(8, 8, 200)
        image[0, 0] = 17
        mask = mask_from_box(image, (0, 0, 2, 2))
        out = white_composite(image, mask)
        assert out[0, 0] == 17
        assert out[7, 7] == 255

    def test_mask_dim_mismatch(self):
        image = gray(8, 8)
        other = mask_from_box(gray(4, 4), (0, 0, 2, 2))
        with pytest.raises(DimensionMismatch):
            white_composite(image, other)

    def test_pixel_exactness_randomized(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            image = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
            x0, y0 = rng.integers(0, 16, size=2)
            x1, y1 = x0 + rng.integers(1, 16), y0 + rng.integers(1, 16)
            mask = mask_from_box(image, (int(x0), int(y0), int(x1), int(y1)))
            out = regularized_black_composite(image, mask)
            inside = mask.bits
            assert np.array_equal(out[inside], image[inside])
            expected = np.floor(image[~inside].astype(np.float64) * 0.1 + 0.5)
            assert np.abs(out[~inside].astype(np.int64) - expected).max() <= 1


class TestSwap:
    def test_identity_when_edited_equals_original(self):
        rng = np.random.default_rng(3)
        image = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
        mask = mask_from_box(image, (2, 2, 6, 6))
        assert np.array_equal(swap_element(image, image.copy(), mask), image)

    def test_all_ones_mask_returns_edited(self):
        rng = np.random.default_rng(4)
        original = rng.integers(0, 256, size=(8, 8), dtype=np.uint8)
        edited = rng.integers(0, 256, size=(8, 8), dtype=np.uint8)
        mask = mask_from_box(original, (0, 0, 8, 8))
        assert np.array_equal(swap_element(original, edited, mask), edited)

    def test_checker_mask_per_pixel(self):
        original = np.array([[1, 2], [3, 4]], dtype=np.uint8)
        edited = np.array([[10, 20], [30, 40]], dtype=np.uint8)
        bits = np.array([[True, False], [False, True]])
        mask = RegionMask(width=2, height=2, bits=bits, source_box=(0, 0, 2, 2))
        out = swap_element(original, edited, mask)
        assert out.tolist() == [[10, 2], [3, 40]]

    def test_swap_is_involutive_on_masked_region(self):
        rng = np.random.default_rng(5)
        original = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        edited = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        mask = mask_from_box(original, (3, 3, 12, 12))
        once = swap_element(original, edited, mask)
        back = swap_element(once, original, mask)
        assert np.array_equal(back, original)


class TestVisualQueryEmbedding:
    def test_box_over_one_attribute_recovers_its_basis(self):
        spec = synth.build_spec(4, 1, seed=0)
        record = SyntheticRecord(id="x", attributes=("attr0", "attr1"))
        image = synth.render_record(spec, record)
        embedder = SyntheticEmbedder(spec)
        mask = mask_from_box(image, spec.grid[0])
        vec = visual_query_embedding(image, mask, embedder)
        assert vec[0] == pytest.approx(1.0, abs=1e-6)
        assert np.abs(vec[1:]).max() <= 1e-6

    def test_all_ones_mask_equals_full_image_embedding(self):
        spec = synth.build_spec(4, 1, seed=0)
        record = SyntheticRecord(id="x", attributes=("attr0", "attr2"))
        image = synth.render_record(spec, record)
        embedder = SyntheticEmbedder(spec)
        h, w = image.shape[:2]
        mask = mask_from_box(image, (0, 0, w, h))
        vec = visual_query_embedding(image, mask, embedder)
        assert np.allclose(vec, embedder.embed_image(image), atol=1e-6)

    def test_box_covering_two_attributes(self):
        spec = synth.build_spec(4, 1, seed=0)
        record = SyntheticRecord(id="x", attributes=("attr0", "attr1", "attr2"))
        image = synth.render_record(spec, record)
        embedder = SyntheticEmbedder(spec)
        x0 = min(spec.grid[0][0], spec.grid[1][0])
        y0 = min(spec.grid[0][1], spec.grid[1][1])
        x1 = max(spec.grid[0][2], spec.grid[1][2])
        y1 = max(spec.grid[0][3], spec.grid[1][3])
        mask = mask_from_box(image, (x0, y0, x1, y1))
        vec = visual_query_embedding(image, mask, embedder)
        expected = normalize(spec.basis("attr0") + spec.basis("attr1"))
        assert np.allclose(vec, expected, atol=1e-6)


class TestCombine:
    def e(self, i):
        v = np.zeros(4, dtype=np.float32)
        v[i] = 1.0
        return v

    def test_intersection_normalized_mean(self):
        out = combine_selected_elements([self.e(0), self.e(1)], "intersection")
        assert len(out) == 1
        assert out[0][0] == pytest.approx(2 ** -0.5, abs=1e-6)
        assert out[0][1] == pytest.approx(2 ** -0.5, abs=1e-6)

    def test_union_pass_through(self):
        vecs = [self.e(0), self.e(1)]
        out = combine_selected_elements(vecs, "union")
        assert len(out) == 2
        assert np.array_equal(out[0], vecs[0])

    def test_single_vector_either_relation(self):
        for relation in ("intersection", "union"):
            out = combine_selected_elements([self.e(2)], relation)
            assert len(out) == 1
            assert np.array_equal(out[0], self.e(2))


class TestEditProviders:
    def test_stub_recolors_masked_region_to_named_color(self):
        image = np.zeros((8, 8, 3), dtype=np.uint8)
        edited, mask, swapped = compose_change_preview(
            image, (0, 0, 4, 4), "make the cap blue", BoxFillSegmenter(), StubEditProvider()
        )
        assert tuple(swapped[0, 0]) == (40, 80, 230)
        assert tuple(swapped[7, 7]) == (0, 0, 0)

    def test_stub_without_color_inverts(self):
        image = np.full((4, 4), 10, dtype=np.uint8)
        out = StubEditProvider().edit(image, "something else entirely")
        assert out[0, 0] == 245

    def test_remote_editor_round_trip(self):
        def handler(request):
            payload = json.loads(request.content)
            image = decode_png(base64.b64decode(payload["image"]))
            edited = np.full_like(image, 200)
            return httpx.Response(
                200, json={"image": base64.b64encode(encode_png(edited)).decode()}
            )

        editor = RemoteEditProvider("http://edit.test", transport=httpx.MockTransport(handler))
        out = editor.edit(np.zeros((4, 4, 3), dtype=np.uint8), "whatever")
        assert out[0, 0, 0] == 200

    def test_remote_editor_unavailable(self):
        def handler(request):
            raise httpx.ReadTimeout("slow")

        editor = RemoteEditProvider("http://edit.test", transport=httpx.MockTransport(handler))
        with pytest.raises(EditorUnavailable):
            editor.edit(np.zeros((4, 4, 3), dtype=np.uint8), "x")


class TestRegionMask:
    def test_empty_mask_rejected(self):
        with pytest.raises(InvalidBox):
            RegionMask(width=4, height=4, bits=np.zeros((4, 4), bool), source_box=(0, 0, 1, 1))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionMismatch):
            RegionMask(width=4, height=5, bits=np.ones((4, 4), bool), source_box=(0, 0, 1, 1))
