import string
import zlib
from multiprocessing import Pool
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from bido.models.enums import ImageFormatEnum, IndexSectionEnum, InputKindEnum, LabelEnum
from bido.models.layout import DexLayout
from bido.schemas.config import CorpusConfig
from bido.schemas.corpus import (
    ControlFlowSim,
    CorpusManifestSchema,
    CorpusRecordSchema,
    GeneratedCorpusSchema,
    IdentifierRandomization,
    JunkInsertion,
    ObfuscationTransform,
    Realignment,
    SamplePairSchema,
    SampleSpecSchema,
    SignatureRewrite,
    StringEncryptionSim,
    describe_transform,
)
from bido.schemas.dex import HEADER_SIZE
from bido.schemas.image import ImageGeometrySchema
from bido.services.dex import DexServices
from bido.services.image import ImageServices
from bido.utils.errors import DegenerateCorpus, IoFailure, MalformedContainer, SpecOverflow
from bido.utils.logger import get_logger

logger = get_logger(__name__)

MANIFEST_NAME = "manifest.jsonl"
MAX_ENTRIES = 0xFFFF

MOTIF_LENGTH = 8
MOTIF_FAMILY_SIZE = 8
MOTIF_SPAN = 0x40
BENIGN_MOTIF_LOW = 0x10
MALICIOUS_MOTIF_LOW = 0x90
DRIFT_SHIFT = 0x40


def _motif_family(low: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(low, low + MOTIF_SPAN, size=(MOTIF_FAMILY_SIZE, MOTIF_LENGTH)).astype(
        np.uint8
    )


BENIGN_MOTIFS = _motif_family(BENIGN_MOTIF_LOW, seed=101)
MALICIOUS_MOTIFS = _motif_family(MALICIOUS_MOTIF_LOW, seed=202)

COMMON_PERMISSIONS = (
    "android.permission.INTERNET",
    "android.permission.ACCESS_NETWORK_STATE",
    "android.permission.VIBRATE",
    "android.permission.WAKE_LOCK",
    "android.permission.CAMERA",
    "android.permission.ACCESS_WIFI_STATE",
    "android.permission.FOREGROUND_SERVICE",
    "android.permission.POST_NOTIFICATIONS",
)
SUSPICIOUS_PERMISSIONS = (
    "android.permission.SEND_SMS",
    "android.permission.RECEIVE_SMS",
    "android.permission.READ_SMS",
    "android.permission.READ_CONTACTS",
    "android.permission.READ_PHONE_STATE",
    "android.permission.RECORD_AUDIO",
    "android.permission.SYSTEM_ALERT_WINDOW",
    "android.permission.REQUEST_INSTALL_PACKAGES",
    "android.permission.BIND_DEVICE_ADMIN",
    "android.permission.RECEIVE_BOOT_COMPLETED",
)
BENIGN_SUSPICIOUS_RATE = 0.1

# (low, high) entry-count ranges drawn per sample
COUNT_RANGES = {
    "string_ids": (40, 57),
    "type_ids": (16, 33),
    "proto_ids": (8, 25),
    "field_ids": (16, 33),
    "method_ids": (48, 81),
    "class_defs": (6, 13),
    "permissions": (3, 7),
}

METHOD_ID = np.dtype([("class_idx", "<u2"), ("proto_idx", "<u2"), ("name_idx", "<u4")])
FIELD_ID = np.dtype([("class_idx", "<u2"), ("type_idx", "<u2"), ("name_idx", "<u4")])
PROTO_ID = np.dtype(
    [("shorty_idx", "<u4"), ("return_type_idx", "<u4"), ("parameters_off", "<u4")]
)
CLASS_DEF = np.dtype(
    [
        ("class_idx", "<u4"),
        ("access_flags", "<u4"),
        ("superclass_idx", "<u4"),
        ("interfaces_off", "<u4"),
        ("source_file_idx", "<u4"),
        ("annotations_off", "<u4"),
        ("class_data_off", "<u4"),
        ("static_values_off", "<u4"),
    ]
)


def drift_weight(drift: float) -> float:
    """Share of malicious motifs drawn from the shifted family; t / (1 + t)."""
    return drift / (1.0 + drift)


def _uleb128(value: int) -> bytes:
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _identifier(rng: np.random.Generator) -> bytes:
    letters = np.frombuffer(string.ascii_lowercase.encode(), dtype=np.uint8)
    return letters[rng.integers(0, len(letters), size=int(rng.integers(4, 13)))].tobytes()


def _below(rng: np.random.Generator, bound: int, size: int) -> np.ndarray:
    return rng.integers(0, max(bound, 1), size=size)


def _plant_motifs(
    chunks: np.ndarray, label: LabelEnum, strength: float, drift: float, rng: np.random.Generator
) -> None:
    """Overwrite (n, 8) chunks in place with class motifs, each with probability `strength`."""
    count = chunks.shape[0]
    hits = rng.random(count) < strength
    motifs = (MALICIOUS_MOTIFS if label is LabelEnum.MALICIOUS else BENIGN_MOTIFS)[
        rng.integers(0, MOTIF_FAMILY_SIZE, size=count)
    ].copy()
    shifted = rng.random(count) < drift_weight(drift)
    if label is LabelEnum.MALICIOUS:
        motifs[shifted] -= DRIFT_SHIFT
    chunks[hits] = motifs[hits]


def _transform_rng(transform: ObfuscationTransform, raw: bytes) -> np.random.Generator:
    return np.random.default_rng([getattr(transform, "seed", 0), zlib.crc32(raw)])


class CorpusServices:
    """
    Synthetic DEX/XML pairs with a plantable class signal, obfuscation analogs
    and drift, plus corpus materialization on disk.
    """

    @staticmethod
    def sample_spec(label: LabelEnum, seed: int, config: CorpusConfig) -> SampleSpecSchema:
        """
        Draw the per-sample entry counts for a corpus sample.

        Args:
            label (LabelEnum): Sample label.
            seed (int): Sample seed.
            config (CorpusConfig): Corpus knobs (motif strength, signal rates, drift).

        Returns:
            SampleSpecSchema: The sample recipe.
        """
        rng = np.random.default_rng([seed, 1])
        counts = {name: int(rng.integers(low, high)) for name, (low, high) in COUNT_RANGES.items()}
        # a malicious sample shows its class in each file independently
        malicious = label is LabelEnum.MALICIOUS
        return SampleSpecSchema(
            label=label,
            seed=seed,
            motif_strength=config.motif_strength,
            drift=config.drift,
            dex_signal=not malicious or bool(rng.random() < config.dex_signal_rate),
            xml_signal=not malicious or bool(rng.random() < config.xml_signal_rate),
            **counts,
        )

    @staticmethod
    def build_synthetic_dex(spec: SampleSpecSchema) -> bytes:
        """
        Build a valid DEX file whose method_ids and class_defs carry class motifs.
        A malicious sample without its DEX signal carries benign motifs.

        Args:
            spec (SampleSpecSchema): The sample recipe.

        Returns:
            bytes: The DEX stream.
        """
        counts = {section: getattr(spec, section.value) for section in IndexSectionEnum}
        for section, count in counts.items():
            if count > MAX_ENTRIES:
                raise SpecOverflow(f"{section.value} count {count} exceeds {MAX_ENTRIES}")

        motif_label = spec.label if spec.dex_signal else LabelEnum.BENIGN
        rng = np.random.default_rng(spec.seed)
        n_strings = counts[IndexSectionEnum.STRING_IDS]
        n_types = counts[IndexSectionEnum.TYPE_IDS]
        n_protos = counts[IndexSectionEnum.PROTO_IDS]
        n_classes = counts[IndexSectionEnum.CLASS_DEFS]
        data_origin = HEADER_SIZE + sum(
            count * section.entry_width for section, count in counts.items()
        )

        data = bytearray()
        string_offsets = []
        for _ in range(n_strings):
            text = _identifier(rng)
            string_offsets.append(data_origin + len(data))
            data += _uleb128(len(text)) + text + b"\x00"
        class_data_offsets = []
        for _ in range(n_classes):
            data += b"\x00" * (-len(data) % 4)
            class_data_offsets.append(data_origin + len(data))
            data += rng.integers(0, 256, size=int(rng.integers(16, 49))).astype(np.uint8).tobytes()

        layout = DexLayout(data=data, data_origin=data_origin)
        layout.sections[IndexSectionEnum.STRING_IDS] = bytearray(
            np.asarray(string_offsets, dtype="<u4").tobytes()
        )
        layout.sections[IndexSectionEnum.TYPE_IDS] = bytearray(
            _below(rng, n_strings, n_types).astype("<u4").tobytes()
        )

        protos = np.zeros(n_protos, dtype=PROTO_ID)
        protos["shorty_idx"] = _below(rng, n_strings, n_protos)
        protos["return_type_idx"] = _below(rng, n_types, n_protos)
        layout.sections[IndexSectionEnum.PROTO_IDS] = bytearray(protos.tobytes())

        n_fields = counts[IndexSectionEnum.FIELD_IDS]
        fields = np.zeros(n_fields, dtype=FIELD_ID)
        fields["class_idx"] = _below(rng, n_types, n_fields)
        fields["type_idx"] = _below(rng, n_types, n_fields)
        fields["name_idx"] = _below(rng, n_strings, n_fields)
        layout.sections[IndexSectionEnum.FIELD_IDS] = bytearray(fields.tobytes())

        n_methods = counts[IndexSectionEnum.METHOD_IDS]
        methods = np.zeros(n_methods, dtype=METHOD_ID)
        methods["class_idx"] = _below(rng, n_types, n_methods)
        methods["proto_idx"] = _below(rng, n_protos, n_methods)
        methods["name_idx"] = _below(rng, n_strings, n_methods)
        method_bytes = methods.view(np.uint8).reshape(-1, MOTIF_LENGTH)
        _plant_motifs(method_bytes, motif_label, spec.motif_strength, spec.drift, rng)
        layout.sections[IndexSectionEnum.METHOD_IDS] = bytearray(method_bytes.tobytes())

        classes = np.zeros(n_classes, dtype=CLASS_DEF)
        classes["class_idx"] = _below(rng, n_types, n_classes)
        classes["access_flags"] = 0x1
        classes["superclass_idx"] = _below(rng, n_types, n_classes)
        classes["source_file_idx"] = _below(rng, n_strings, n_classes)
        classes["class_data_off"] = class_data_offsets
        class_bytes = classes.view(np.uint8).reshape(-1, MOTIF_LENGTH)
        _plant_motifs(class_bytes, motif_label, spec.motif_strength, spec.drift, rng)
        layout.sections[IndexSectionEnum.CLASS_DEFS] = bytearray(class_bytes.tobytes())

        return layout.assemble()

    @staticmethod
    def build_synthetic_xml(spec: SampleSpecSchema) -> bytes:
        """
        Build a text manifest with permission lines; malicious samples add
        suspicious permissions with probability equal to the motif strength
        when they carry their XML signal.

        Args:
            spec (SampleSpecSchema): The sample recipe.

        Returns:
            bytes: UTF-8 manifest text.
        """
        rng = np.random.default_rng([spec.seed, 2])
        permissions: List[str] = []
        if spec.permissions:
            common = rng.permutation(len(COMMON_PERMISSIONS))[
                : min(spec.permissions, len(COMMON_PERMISSIONS))
            ]
            permissions.extend(COMMON_PERMISSIONS[i] for i in common)
            shows_class = spec.label is LabelEnum.MALICIOUS and spec.xml_signal
            rate = spec.motif_strength if shows_class else BENIGN_SUSPICIOUS_RATE
            drawn = rng.random(len(SUSPICIOUS_PERMISSIONS)) < rate
            permissions.extend(name for name, keep in zip(SUSPICIOUS_PERMISSIONS, drawn) if keep)
            permissions = [permissions[i] for i in rng.permutation(len(permissions))]

        package = f"com.synthetic.app{spec.seed}"
        lines = [
            '<?xml version="1.0" encoding="utf-8"?>',
            '<manifest xmlns:android="http://schemas.android.com/apk/res/android" '
            f'package="{package}">',
        ]
        lines.extend(f'    <uses-permission android:name="{name}" />' for name in permissions)
        lines.append(f'    <application android:label="{_identifier(rng).decode()}">')
        lines.append("    </application>")
        lines.append("</manifest>")
        return ("\n".join(lines) + "\n").encode("utf-8")

    @staticmethod
    def obfuscate(raw: bytes, transforms: Sequence[ObfuscationTransform]) -> bytes:
        """
        Apply obfuscation analogs in order, re-synthesizing the header after each.

        Args:
            raw (bytes): A parseable DEX stream.
            transforms (Sequence[ObfuscationTransform]): Transforms to apply.

        Returns:
            bytes: The obfuscated DEX stream.
        """
        for transform in transforms:
            layout = DexLayout.parse(raw)
            rng = _transform_rng(transform, raw)
            if isinstance(transform, JunkInsertion):
                CorpusServices._insert_junk(layout, transform.rate, rng)
            elif isinstance(transform, IdentifierRandomization):
                CorpusServices._randomize_identifiers(layout, rng)
            elif isinstance(transform, StringEncryptionSim):
                CorpusServices._encrypt_strings(layout, transform.key)
            elif isinstance(transform, Realignment):
                for region in layout.gaps:
                    layout.gaps[region] += transform.pad
            elif isinstance(transform, SignatureRewrite):
                CorpusServices._rewrite_signatures(layout, rng)
            elif isinstance(transform, ControlFlowSim):
                layout.data += rng.integers(0, 256, size=transform.size).astype(np.uint8).tobytes()
            raw = layout.assemble()
        return raw

    @staticmethod
    def _insert_junk(layout: DexLayout, rate: float, rng: np.random.Generator) -> None:
        for section in (IndexSectionEnum.METHOD_IDS, IndexSectionEnum.CLASS_DEFS):
            entries = layout.entries(section).copy()
            extra = int(round(rate * entries.shape[0]))
            if not extra:
                continue
            junk = rng.integers(0, 16, size=(extra, section.entry_width)).astype(np.uint8)
            positions = np.sort(rng.integers(0, entries.shape[0] + 1, size=extra))
            layout.sections[section] = bytearray(np.insert(entries, positions, junk, axis=0).tobytes())

    @staticmethod
    def _randomize_identifiers(layout: DexLayout, rng: np.random.Generator) -> None:
        n_strings = layout.count(IndexSectionEnum.STRING_IDS)
        for section in (IndexSectionEnum.METHOD_IDS, IndexSectionEnum.FIELD_IDS):
            words = layout.words(section)
            words[:, 1] = _below(rng, n_strings, words.shape[0])

    @staticmethod
    def _encrypt_strings(layout: DexLayout, key: int) -> None:
        entries = layout.entries(IndexSectionEnum.STRING_IDS)
        entries ^= np.uint8(key)
        data = np.frombuffer(layout.data, dtype=np.uint8)
        data ^= np.uint8(key)

    @staticmethod
    def _rewrite_signatures(layout: DexLayout, rng: np.random.Generator) -> None:
        n_strings = layout.count(IndexSectionEnum.STRING_IDS)
        n_types = layout.count(IndexSectionEnum.TYPE_IDS)
        n_protos = layout.count(IndexSectionEnum.PROTO_IDS)
        protos = layout.words(IndexSectionEnum.PROTO_IDS)
        protos[:, 0] = _below(rng, n_strings, protos.shape[0])
        protos[:, 1] = _below(rng, n_types, protos.shape[0])
        methods = np.frombuffer(layout.sections[IndexSectionEnum.METHOD_IDS], dtype="<u2").reshape(-1, 4)
        methods[:, 1] = _below(rng, n_protos, methods.shape[0])

    @staticmethod
    def sample_seeds(seed: int, n: int) -> List[int]:
        """Independent per-sample seeds derived from the corpus seed."""
        return [int(child.generate_state(1)[0]) for child in np.random.SeedSequence(seed).spawn(n)]

    @staticmethod
    def corpus_labels(n: int, malicious_fraction: float, seed: int) -> List[LabelEnum]:
        malicious = int(round(n * malicious_fraction))
        labels = np.array([1] * malicious + [0] * (n - malicious))
        return [LabelEnum(int(label)) for label in np.random.default_rng(seed).permutation(labels)]

    @staticmethod
    def make_pair(
        index: int,
        label: LabelEnum,
        seed: int,
        config: CorpusConfig,
        transforms: Sequence[ObfuscationTransform] = (),
    ) -> Tuple[SamplePairSchema, Optional[SamplePairSchema]]:
        """
        Build one clean pair and, when transforms are given, its obfuscated twin.

        Args:
            index (int): Sample position, used for the id.
            label (LabelEnum): Sample label.
            seed (int): Sample seed.
            config (CorpusConfig): Corpus knobs.
            transforms (Sequence[ObfuscationTransform]): Obfuscations for the twin.

        Returns:
            Tuple[SamplePairSchema, Optional[SamplePairSchema]]: Clean pair and optional twin.
        """
        spec = CorpusServices.sample_spec(label, seed, config)
        dex = CorpusServices.build_synthetic_dex(spec)
        xml = CorpusServices.build_synthetic_xml(spec)
        clean = SamplePairSchema(
            id=f"{index:06d}", label=label, seed=seed, drift=spec.drift, dex=dex, xml=xml
        )
        if not transforms:
            return clean, None
        twin = clean.model_copy(
            update={
                "dex": CorpusServices.obfuscate(dex, transforms),
                "transforms": [describe_transform(transform) for transform in transforms],
            }
        )
        return clean, twin

    @staticmethod
    def generate_samples(
        config: CorpusConfig, transforms: Sequence[ObfuscationTransform] = ()
    ) -> GeneratedCorpusSchema:
        """
        Generate labeled pairs in memory.

        Args:
            config (CorpusConfig): Corpus size, mix, strength, drift and seed.
            transforms (Sequence[ObfuscationTransform]): Obfuscations for the twins.

        Returns:
            GeneratedCorpusSchema: Clean pairs and their obfuscated twins, index-aligned.
        """
        labels = CorpusServices.corpus_labels(config.n, config.malicious_fraction, config.seed)
        seeds = CorpusServices.sample_seeds(config.seed, config.n)
        corpus = GeneratedCorpusSchema(clean=[])
        for index, (label, seed) in enumerate(zip(labels, seeds)):
            clean, twin = CorpusServices.make_pair(index, label, seed, config, transforms)
            corpus.clean.append(clean)
            if twin is not None:
                corpus.obfuscated.append(twin)
        return corpus

    @staticmethod
    def gen_corpus(
        config: CorpusConfig,
        out_dir: Path,
        transforms: Sequence[ObfuscationTransform] = (),
    ) -> CorpusManifestSchema:
        """
        Materialize a corpus as corpus/{dex,xml,img}/<id>.* plus a JSON-lines manifest.

        Args:
            config (CorpusConfig): Corpus knobs, including the worker count.
            out_dir (Path): Output directory.
            transforms (Sequence[ObfuscationTransform]): Obfuscations applied to every DEX.

        Returns:
            CorpusManifestSchema: The written manifest.
        """
        out_dir = Path(out_dir)
        try:
            for sub in ("dex", "xml", "img"):
                (out_dir / sub).mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise IoFailure(f"cannot create corpus directory {out_dir}: {exc}")

        labels = CorpusServices.corpus_labels(config.n, config.malicious_fraction, config.seed)
        seeds = CorpusServices.sample_seeds(config.seed, config.n)
        tasks = [
            (index, label, seed, config, list(transforms), out_dir)
            for index, (label, seed) in enumerate(zip(labels, seeds))
        ]
        if config.jobs > 1:
            with Pool(config.jobs) as pool:
                results = pool.starmap(_write_sample, tasks)
        else:
            results = [_write_sample(*task) for task in tasks]

        records = [record for record, _ in results]
        manifest = CorpusManifestSchema(root=str(out_dir), records=records)
        try:
            with open(out_dir / MANIFEST_NAME, "w") as handle:
                for record in records:
                    handle.write(record.model_dump_json() + "\n")
        except OSError as exc:
            raise IoFailure(f"cannot write manifest: {exc}")

        malicious = sum(record.label is LabelEnum.MALICIOUS for record in records)
        logger.info(f"corpus of {len(records)} samples ({malicious} malicious) written to {out_dir}")
        if transforms:
            distances = [distance for _, distance in results]
            logger.info(f"mean per-pixel L1 shift from obfuscation: {np.mean(distances):.3f}")
        return manifest

    @staticmethod
    def load_manifest(root: Path) -> CorpusManifestSchema:
        """
        Read a corpus manifest.

        Args:
            root (Path): Corpus directory (or the manifest file itself).

        Returns:
            CorpusManifestSchema: The records, paths relative to the corpus root.
        """
        root = Path(root)
        path = root if root.is_file() else root / MANIFEST_NAME
        try:
            lines = path.read_text().splitlines()
        except OSError as exc:
            raise IoFailure(f"cannot read corpus manifest {path}: {exc}")
        try:
            records = [CorpusRecordSchema.model_validate_json(line) for line in lines if line.strip()]
        except ValidationError as exc:
            raise MalformedContainer(f"corrupt manifest {path}: {exc}")
        return CorpusManifestSchema(root=str(path.parent), records=records)

    @staticmethod
    def image_distance(before: bytes, after: bytes, geometry: ImageGeometrySchema) -> float:
        """Mean per-channel absolute difference between two DEX images."""
        first = ImageServices.dex_to_image(before, geometry).to_array().astype(np.int16)
        second = ImageServices.dex_to_image(after, geometry).to_array().astype(np.int16)
        return float(np.abs(first - second).mean())

    @staticmethod
    def byte_histogram(raw: bytes, kind: InputKindEnum = InputKindEnum.DEX) -> np.ndarray:
        """256-bin counts over the imaged bytes (index bytes for DEX, whole file for XML)."""
        if kind is InputKindEnum.DEX:
            raw = DexServices.extract_index_bytes(raw, DexServices.parse_header(raw)).data
        return np.bincount(np.frombuffer(raw, dtype=np.uint8), minlength=256).astype(np.float64)

    @staticmethod
    def histogram_baseline(
        pairs: Sequence[SamplePairSchema],
        kind: InputKindEnum = InputKindEnum.DEX,
        train_fraction: float = 0.5,
    ) -> float:
        """
        Accuracy of a nearest-centroid classifier over byte histograms.

        Args:
            pairs (Sequence[SamplePairSchema]): Labeled samples; the first share trains.
            kind (InputKindEnum): Which file of each pair to histogram.
            train_fraction (float): Share of samples used for the centroids.

        Returns:
            float: Accuracy on the remaining samples.
        """
        histograms = np.stack(
            [
                CorpusServices.byte_histogram(pair.dex if kind is InputKindEnum.DEX else pair.xml, kind)
                for pair in pairs
            ]
        )
        labels = np.array([int(pair.label) for pair in pairs])
        cut = int(len(pairs) * train_fraction)
        train_labels = labels[:cut]
        if len(set(train_labels.tolist())) < 2 or cut == len(pairs):
            raise DegenerateCorpus("histogram baseline needs both classes and a held-out share")

        centroids = np.stack(
            [histograms[:cut][train_labels == label].mean(axis=0) for label in (0, 1)]
        )
        distances = np.abs(histograms[cut:, None, :] - centroids[None, :, :]).sum(axis=-1)
        return float((distances.argmin(axis=1) == labels[cut:]).mean())

    @staticmethod
    def byte_distribution(pairs: Sequence[SamplePairSchema]) -> np.ndarray:
        """Normalized histogram of all DEX index bytes in a corpus."""
        total = sum(CorpusServices.byte_histogram(pair.dex) for pair in pairs)
        return total / total.sum()

    @staticmethod
    def total_variation(first: np.ndarray, second: np.ndarray) -> float:
        return float(0.5 * np.abs(first - second).sum())


def _write_sample(
    index: int,
    label: LabelEnum,
    seed: int,
    config: CorpusConfig,
    transforms: List[ObfuscationTransform],
    out_dir: Path,
) -> Tuple[CorpusRecordSchema, float]:
    clean, twin = CorpusServices.make_pair(index, label, seed, config, transforms)
    sample = twin if twin is not None else clean
    dex_image = ImageServices.dex_to_image(sample.dex, config.dex_geometry)
    xml_image = ImageServices.xml_to_image(sample.xml, config.xml_geometry)
    suffix = "png" if config.image_format is ImageFormatEnum.PNG else "jpg"

    record = CorpusRecordSchema(
        id=sample.id,
        label=label,
        seed=seed,
        drift=sample.drift,
        transforms=sample.transforms,
        dex_path=f"dex/{sample.id}.dex",
        xml_path=f"xml/{sample.id}.xml",
        dex_image_path=f"img/{sample.id}.dex.{suffix}",
        xml_image_path=f"img/{sample.id}.xml.{suffix}",
        dex_truncated=dex_image.truncated,
        xml_truncated=xml_image.truncated,
    )
    try:
        (out_dir / record.dex_path).write_bytes(sample.dex)
        (out_dir / record.xml_path).write_bytes(sample.xml)
        (out_dir / record.dex_image_path).write_bytes(
            ImageServices.encode_image(dex_image, config.image_format)
        )
        (out_dir / record.xml_image_path).write_bytes(
            ImageServices.encode_image(xml_image, config.image_format)
        )
    except OSError as exc:
        raise IoFailure(f"cannot write sample {sample.id}: {exc}")

    distance = (
        CorpusServices.image_distance(clean.dex, twin.dex, config.dex_geometry) if twin else 0.0
    )
    return record, distance
