import dataclasses

import numpy as np
import pytest

from bba import binio
from bba.data import (
    NUM_CLASSES, Dataset, ShiftConfig, generate_domain_pair, grating, load_dataset, save_dataset,
)
from bba.experiment import TrainConfig, train_supervised
from bba.polarity import PolarityMap

NO_SHIFT = ShiftConfig(brightness_shift=0.0, contrast_scale=1.0, noise_sigma_source=0.0,
                       noise_sigma_target=0.0, max_translation=0, occluders=0,
                       samples_per_class=5, test_per_class=5)


def by_class(ds):
    order = np.argsort(ds.labels, kind="stable")
    return ds.images[order], ds.labels[order]


class TestGenerate:
    def test_no_shift_domains_identical(self):
        src, tgt = generate_domain_pair(NO_SHIFT)
        xs, ys = by_class(src)
        xt, yt = by_class(tgt)
        np.testing.assert_array_equal(ys, yt)
        np.testing.assert_allclose(xs, xt, atol=1e-12)

    def test_seed_determinism(self):
        cfg = ShiftConfig(samples_per_class=10, seed=3)
        a, b = generate_domain_pair(cfg), generate_domain_pair(cfg)
        for da, db in zip(a, b):
            assert da.images.tobytes() == db.images.tobytes()
            assert da.labels.tobytes() == db.labels.tobytes()
        c = generate_domain_pair(dataclasses.replace(cfg, seed=4))
        assert a[1].images.tobytes() != c[1].images.tobytes()

    def test_splits_differ(self):
        cfg = ShiftConfig(samples_per_class=10, test_per_class=10)
        assert generate_domain_pair(cfg, "train")[0].images.tobytes() != \
            generate_domain_pair(cfg, "test")[0].images.tobytes()

    def test_balance_and_standardisation(self):
        cfg = ShiftConfig(samples_per_class=30, test_per_class=7)
        for split, per in (("train", 30), ("test", 7)):
            for ds in generate_domain_pair(cfg, split):
                np.testing.assert_array_equal(np.bincount(ds.labels, minlength=NUM_CLASSES), per)
                assert abs(ds.images.mean()) < 1e-9
                assert abs(ds.images.var() - 1) < 1e-9
                assert np.all(np.isfinite(ds.images))
                assert ds.meta["labels_eval_only"] == (ds.domain == "target")

    def test_polarity_shares_frequency(self):
        # within a group only orientation changes, so the spectra have equal radius
        def radius(img):
            f = np.abs(np.fft.fft2(img))
            f[0, 0] = 0
            i, j = np.unravel_index(np.argmax(f), f.shape)
            i, j = min(i, 16 - i), min(j, 16 - j)
            return np.hypot(i, j)
        pos = [radius(grating(k, 2.0)) for k in (0, 4)]
        assert pos[0] == pytest.approx(pos[1], abs=0.5)

    @pytest.mark.parametrize("bad", [dict(contrast_scale=0.0), dict(max_translation=4),
                                     dict(noise_sigma_target=-1.0), dict(samples_per_class=0),
                                     dict(occluder_size=0), dict(freq_negative=0.0)])
    def test_invalid_config(self, bad):
        with pytest.raises(ValueError):
            generate_domain_pair(dataclasses.replace(NO_SHIFT, **bad))

    def test_unknown_split(self):
        with pytest.raises(ValueError):
            generate_domain_pair(NO_SHIFT, "val")

    def test_polarity_probe(self):
        src, _ = generate_domain_pair(ShiftConfig(samples_per_class=100))
        pmap = PolarityMap.halves(NUM_CLASSES)
        y = pmap.group_of(src.labels)
        probe = train_supervised(src.images, y, [src.images.shape[1], 2], TrainConfig(epochs=20), seed=0)
        assert np.mean(probe.predict(src.images) == y) >= 0.95

    def test_dataset_validation(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((2, 4)), np.array([0, 1]), "source", 2, 2, num_classes=1)
        with pytest.raises(ValueError):
            Dataset(np.zeros((2, 4)), np.array([0, 1]), "other", 2, 2)


class TestDatasetFile:
    def test_round_trip(self, tmp_path):
        _, tgt = generate_domain_pair(ShiftConfig(samples_per_class=4))
        save_dataset(tgt, tmp_path / "t.bds")
        back = load_dataset(tmp_path / "t.bds")
        assert back.images.tobytes() == tgt.images.tobytes()
        assert back.labels.tobytes() == tgt.labels.tobytes()
        assert (back.domain, back.height, back.width, back.num_classes, back.meta) == \
            (tgt.domain, tgt.height, tgt.width, tgt.num_classes, tgt.meta)

    def test_truncated(self, tmp_path):
        src, _ = generate_domain_pair(ShiftConfig(samples_per_class=4))
        path = tmp_path / "s.bds"
        save_dataset(src, path)
        raw = path.read_bytes()
        for cut in (2, 10, 60, len(raw) - 1):
            path.write_bytes(raw[:cut])
            with pytest.raises(binio.FormatError, match="offset"):
                load_dataset(path)

    def test_trailing_bytes(self, tmp_path):
        src, _ = generate_domain_pair(ShiftConfig(samples_per_class=4))
        path = tmp_path / "s.bds"
        save_dataset(src, path)
        path.write_bytes(path.read_bytes() + b"\0")
        with pytest.raises(binio.FormatError):
            load_dataset(path)

    def test_version_mismatch(self, tmp_path):
        src, _ = generate_domain_pair(ShiftConfig(samples_per_class=4))
        path = tmp_path / "s.bds"
        save_dataset(src, path)
        raw = bytearray(path.read_bytes())
        raw[4:8] = (99).to_bytes(4, "little")
        path.write_bytes(bytes(raw))
        with pytest.raises(binio.VersionError, match="99"):
            load_dataset(path)

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x").write_bytes(b"NOPE" + b"\0" * 20)
        with pytest.raises(binio.FormatError):
            load_dataset(tmp_path / "x")
