import numpy as np
import pytest
from pydantic import ValidationError

from bido.models.enums import IndexSectionEnum, InputKindEnum, LabelEnum
from bido.models.layout import DexLayout
from bido.schemas.config import CorpusConfig
from bido.schemas.corpus import (
    ControlFlowSim,
    IdentifierRandomization,
    JunkInsertion,
    Realignment,
    SampleSpecSchema,
    SignatureRewrite,
    StringEncryptionSim,
    describe_transform,
    parse_transforms,
)
from bido.schemas.image import ImageGeometrySchema
from bido.services.corpus import (
    BENIGN_MOTIFS,
    MALICIOUS_MOTIFS,
    MANIFEST_NAME,
    SUSPICIOUS_PERMISSIONS,
    CorpusServices,
)
from bido.services.dex import DexServices
from bido.utils.errors import DegenerateCorpus, IoFailure, MalformedContainer, SpecOverflow


def index_bytes(raw: bytes) -> bytes:
    return DexServices.extract_index_bytes(raw, DexServices.parse_header(raw)).data


class TestSyntheticDex:
    def test_deterministic(self, sample_spec):
        first = CorpusServices.build_synthetic_dex(sample_spec)
        assert CorpusServices.build_synthetic_dex(sample_spec) == first

    def test_counts_and_integrity(self, sample_spec, dex_bytes):
        header = DexServices.parse_header(dex_bytes)
        DexServices.verify_integrity(dex_bytes, header)
        assert header.class_defs_size == sample_spec.class_defs
        assert header.string_ids_size == sample_spec.string_ids

    def test_entry_count_limit(self):
        spec = SampleSpecSchema(label=LabelEnum.BENIGN, seed=1, method_ids=0x10000)
        with pytest.raises(SpecOverflow):
            CorpusServices.build_synthetic_dex(spec)

    def test_empty_spec_is_header_only(self):
        raw = CorpusServices.build_synthetic_dex(SampleSpecSchema(label=LabelEnum.BENIGN, seed=1))
        assert len(raw) == 112

    def test_motif_strength_separates_classes(self):
        config = CorpusConfig(n=200, dex_signal_rate=1.0, seed=1)
        corpus = CorpusServices.generate_samples(config)
        assert CorpusServices.histogram_baseline(corpus.clean) > 0.9

    def test_baseline_needs_both_classes(self):
        config = CorpusConfig(n=10, malicious_fraction=0.0, seed=1)
        corpus = CorpusServices.generate_samples(config)
        with pytest.raises(DegenerateCorpus):
            CorpusServices.histogram_baseline(corpus.clean)

    def test_hidden_dex_signal_looks_benign(self):
        malicious = SampleSpecSchema(label=LabelEnum.MALICIOUS, seed=5, method_ids=40, dex_signal=False)
        benign = malicious.model_copy(update={"label": LabelEnum.BENIGN})
        assert CorpusServices.build_synthetic_dex(malicious) == CorpusServices.build_synthetic_dex(
            benign
        )

    def test_signal_rates_are_drawn_per_malicious_sample(self):
        config = CorpusConfig(dex_signal_rate=0.9, xml_signal_rate=0.0)
        specs = [CorpusServices.sample_spec(LabelEnum.MALICIOUS, seed, config) for seed in range(400)]
        shown = np.mean([spec.dex_signal for spec in specs])
        assert 0.85 < shown < 0.95
        assert not any(spec.xml_signal for spec in specs)
        benign = CorpusServices.sample_spec(LabelEnum.BENIGN, 0, config)
        assert benign.dex_signal and benign.xml_signal


class TestSyntheticXml:
    def test_skeleton_without_permissions(self):
        xml = CorpusServices.build_synthetic_xml(SampleSpecSchema(label=LabelEnum.MALICIOUS, seed=2))
        assert b"uses-permission" not in xml
        assert xml.startswith(b"<?xml")

    def test_full_strength_malicious_requests_every_suspicious_permission(self):
        spec = SampleSpecSchema(label=LabelEnum.MALICIOUS, seed=2, permissions=4, motif_strength=1.0)
        xml = CorpusServices.build_synthetic_xml(spec).decode()
        assert all(name in xml for name in SUSPICIOUS_PERMISSIONS)

    def test_hidden_xml_signal_looks_benign(self):
        spec = SampleSpecSchema(
            label=LabelEnum.MALICIOUS, seed=2, permissions=4, motif_strength=1.0, xml_signal=False
        )
        benign = spec.model_copy(update={"label": LabelEnum.BENIGN})
        assert CorpusServices.build_synthetic_xml(spec) == CorpusServices.build_synthetic_xml(benign)

    def test_permission_lines_present(self, xml_bytes, sample_spec):
        assert xml_bytes.count(b"uses-permission") >= min(sample_spec.permissions, 8)


class TestTransforms:
    def test_parse(self):
        transforms = parse_transforms("junk:0.25, rename:7,encrypt")
        assert transforms == [
            JunkInsertion(rate=0.25),
            IdentifierRandomization(seed=7),
            StringEncryptionSim(),
        ]
        described = [describe_transform(t) for t in transforms]
        assert described == ["junk:0.25", "rename:7", "encrypt:90"]
        assert parse_transforms(None) == []

    def test_unknown_kind(self):
        with pytest.raises(ValidationError):
            parse_transforms("shuffle")

    @pytest.mark.parametrize(
        "transform",
        [
            JunkInsertion(),
            IdentifierRandomization(seed=3),
            StringEncryptionSim(),
            Realignment(),
            SignatureRewrite(seed=3),
            ControlFlowSim(seed=3),
        ],
    )
    def test_output_is_valid_dex(self, dex_bytes, transform):
        raw = CorpusServices.obfuscate(dex_bytes, [transform])
        DexServices.verify_integrity(raw, DexServices.parse_header(raw))

    def test_junk_grows_method_table(self, dex_bytes):
        before = DexServices.parse_header(dex_bytes)
        raw = CorpusServices.obfuscate(dex_bytes, [JunkInsertion(rate=0.5)])
        after = DexServices.parse_header(raw)
        extra = round(0.5 * before.method_ids_size)
        assert after.method_ids_size == before.method_ids_size + extra

    def test_encryption_is_an_involution(self, dex_bytes):
        once = CorpusServices.obfuscate(dex_bytes, [StringEncryptionSim(key=0x33)])
        assert once != dex_bytes
        assert CorpusServices.obfuscate(once, [StringEncryptionSim(key=0x33)]) == dex_bytes

    def test_realignment_moves_sections(self, dex_bytes):
        raw = CorpusServices.obfuscate(dex_bytes, [Realignment(pad=16)])
        before, after = DexServices.parse_header(dex_bytes), DexServices.parse_header(raw)
        assert after.method_ids_off > before.method_ids_off
        assert index_bytes(raw) != index_bytes(dex_bytes)
        assert (
            DexLayout.parse(raw).sections[IndexSectionEnum.METHOD_IDS]
            == DexLayout.parse(dex_bytes).sections[IndexSectionEnum.METHOD_IDS]
        )

    def test_control_flow_leaves_index_image_alone(self, dex_bytes):
        raw = CorpusServices.obfuscate(dex_bytes, [ControlFlowSim(seed=1, size=512)])
        assert len(raw) > len(dex_bytes)
        assert index_bytes(raw) == index_bytes(dex_bytes)

    def test_renaming_keeps_layout(self, dex_bytes):
        raw = CorpusServices.obfuscate(dex_bytes, [IdentifierRandomization(seed=9)])
        assert len(raw) == len(dex_bytes)
        assert index_bytes(raw) != index_bytes(dex_bytes)

    def test_obfuscation_shifts_the_image(self, dex_bytes):
        raw = CorpusServices.obfuscate(dex_bytes, [JunkInsertion(), IdentifierRandomization()])
        assert CorpusServices.image_distance(dex_bytes, raw, ImageGeometrySchema(width=32, height=32)) > 0


class TestGenerateSamples:
    def test_deterministic_and_labeled(self):
        config = CorpusConfig(n=10, seed=4)
        first = CorpusServices.generate_samples(config)
        second = CorpusServices.generate_samples(config)
        assert first == second
        assert sum(pair.label is LabelEnum.MALICIOUS for pair in first.clean) == 5

    def test_twins_share_base_sample(self):
        config = CorpusConfig(n=6, seed=4)
        corpus = CorpusServices.generate_samples(config, [JunkInsertion()])
        assert len(corpus.obfuscated) == 6
        for clean, twin in zip(corpus.clean, corpus.obfuscated):
            assert (clean.id, clean.label, clean.xml) == (twin.id, twin.label, twin.xml)
            assert clean.dex != twin.dex
            assert twin.transforms == ["junk:0.5"]

    def test_drift_moves_byte_distribution_monotonically(self):
        distributions = []
        for drift in (0.0, 1.0, 4.0):
            config = CorpusConfig(n=60, malicious_fraction=1.0, drift=drift, seed=8)
            corpus = CorpusServices.generate_samples(config)
            distributions.append(CorpusServices.byte_distribution(corpus.clean))
        near = CorpusServices.total_variation(distributions[0], distributions[1])
        far = CorpusServices.total_variation(distributions[0], distributions[2])
        assert 0 < near < far

    def test_xml_histograms_also_separate(self):
        corpus = CorpusServices.generate_samples(CorpusConfig(n=100, seed=2))
        assert CorpusServices.histogram_baseline(corpus.clean, InputKindEnum.XML) > 0.5


class TestGenCorpus:
    def test_writes_files_and_manifest(self, tmp_path):
        config = CorpusConfig(n=4, seed=1, dex_geometry=ImageGeometrySchema(width=32, height=32))
        manifest = CorpusServices.gen_corpus(config, tmp_path)
        assert len(manifest) == 4
        assert (tmp_path / MANIFEST_NAME).is_file()
        for record in manifest.records:
            assert (tmp_path / record.dex_path).is_file()
            assert (tmp_path / record.dex_image_path).is_file()
            assert (tmp_path / record.xml_image_path).is_file()
        assert CorpusServices.load_manifest(tmp_path) == manifest

    def test_rerun_is_byte_identical(self, tmp_path):
        config = CorpusConfig(n=4, seed=1)
        CorpusServices.gen_corpus(config, tmp_path / "a", [JunkInsertion()])
        parallel = config.model_copy(update={"jobs": 2})
        CorpusServices.gen_corpus(parallel, tmp_path / "b", [JunkInsertion()])
        for path in sorted((tmp_path / "a").rglob("*")):
            if path.is_file() and path.name != MANIFEST_NAME:
                twin = tmp_path / "b" / path.relative_to(tmp_path / "a")
                assert twin.read_bytes() == path.read_bytes()

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(IoFailure):
            CorpusServices.load_manifest(tmp_path / "nowhere")

    def test_corrupt_manifest(self, tmp_path):
        (tmp_path / MANIFEST_NAME).write_text("{not json}\n")
        with pytest.raises(MalformedContainer):
            CorpusServices.load_manifest(tmp_path)


def test_motif_families_are_disjoint():
    assert BENIGN_MOTIFS.max() < MALICIOUS_MOTIFS.min()
    assert np.all(MALICIOUS_MOTIFS >= 0x90)
    assert IndexSectionEnum.METHOD_IDS.entry_width == 8
