"""Sample schema, dataset IO, synthetic data generation, batching."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, ParseError, SchemaError


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered sensitive attributes, each with its ordered group names."""

    attributes: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self):
        names = [name for name, _ in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate attribute names")
        for name, values in self.attributes:
            if len(values) < 2:
                raise SchemaError(f"attribute {name!r} needs >= 2 groups")
            if len(set(values)) != len(values):
                raise SchemaError(f"attribute {name!r} has duplicate group names")

    @property
    def M(self) -> int:
        return len(self.attributes)

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.attributes]

    def values(self, m: int) -> tuple[str, ...]:
        return self.attributes[m][1]

    def group_index(self, m: int, group_name: str) -> int:
        values = self.attributes[m][1]
        try:
            return values.index(group_name)
        except ValueError:
            raise SchemaError(
                f"unknown group {group_name!r} for attribute {self.attributes[m][0]!r}"
            ) from None

    def to_dict(self) -> dict:
        return {"attributes": [{"name": n, "values": list(v)} for n, v in self.attributes]}

    @classmethod
    def from_dict(cls, d: dict) -> "AttributeSchema":
        return cls(tuple((a["name"], tuple(a["values"])) for a in d["attributes"]))


def make_schema(attributes: list[tuple[str, list[str]]]) -> AttributeSchema:
    return AttributeSchema(tuple((n, tuple(v)) for n, v in attributes))


def default_schema() -> AttributeSchema:
    return make_schema([("gender", ["male", "female"]),
                        ("language", ["english", "spanish"])])


@dataclass
class Sample:
    id: int
    image_features: np.ndarray
    note_variants: "NoteVariants"  # noqa: F821 - defined in fairvl.notes
    attribute_values: tuple[int, ...]
    label: int

    def validate(self, schema: AttributeSchema):
        if len(self.attribute_values) != schema.M:
            raise SchemaError(f"sample {self.id}: expected {schema.M} attribute values")
        for m, idx in enumerate(self.attribute_values):
            if not 0 <= idx < len(schema.values(m)):
                raise SchemaError(f"sample {self.id}: attribute index {idx} out of range")
        if not np.all(np.isfinite(self.image_features)):
            raise SchemaError(f"sample {self.id}: non-finite image features")
        if self.label not in (0, 1):
            raise SchemaError(f"sample {self.id}: label must be 0/1")


def _check_probability_vector(p, what: str):
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise SchemaError(f"{what} is not a probability vector")
    return p


@dataclass
class SyntheticSpec:
    """Controls the synthetic feature generator.

    Features are built as label_direction * (+-class_separation/2) plus a
    per-group offset of magnitude bias_strength along a direction unique to
    each (attribute, group), plus isotropic Gaussian noise. All directions
    are orthonormal, so bias_strength directly controls how linearly
    decodable each attribute is from the raw features.
    """

    n_samples: int
    d_in: int = 32
    class_separation: float = 2.0
    bias_strength: float = 0.0
    group_priors: list[list[float]] | None = None
    label_prior_per_group: dict[str, list[float]] | None = None
    noise_std: float = 1.0
    seed: int = 0
    note_variants_k: int = 5

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        return cls(**d)


def _orthonormal_directions(d_in: int, count: int, seed: int) -> np.ndarray:
    """count orthonormal unit vectors in R^d_in via Gram-Schmidt on seeded draws."""
    if count > d_in:
        raise DimensionError(
            f"d_in={d_in} too small for {count} orthogonal directions"
        )
    rng = np.random.default_rng(seed)
    basis = np.empty((count, d_in))
    for i in range(count):
        while True:
            v = rng.standard_normal(d_in)
            for b in basis[:i]:
                v -= (v @ b) * b
            norm = np.linalg.norm(v)
            if norm > 1e-8:
                basis[i] = v / norm
                break
    return basis


def generate_synthetic(spec: SyntheticSpec, schema: AttributeSchema) -> list[Sample]:
    from .notes import synthesize_notes

    if spec.noise_std <= 0:
        raise ConfigError("noise_std must be > 0")
    if spec.class_separation < 0 or spec.bias_strength < 0:
        raise ConfigError("class_separation and bias_strength must be >= 0")

    priors = []
    for m in range(schema.M):
        if spec.group_priors is not None:
            p = _check_probability_vector(
                spec.group_priors[m], f"group prior for {schema.names[m]}"
            )
            if len(p) != len(schema.values(m)):
                raise SchemaError(f"group prior length mismatch for {schema.names[m]}")
        else:
            k = len(schema.values(m))
            p = np.full(k, 1.0 / k)
        priors.append(p)

    n_dirs = 1 + sum(len(schema.values(m)) for m in range(schema.M))
    dirs = _orthonormal_directions(spec.d_in, n_dirs, spec.seed)
    label_dir = dirs[0]
    group_dirs: list[np.ndarray] = []
    off = 1
    for m in range(schema.M):
        k = len(schema.values(m))
        group_dirs.append(dirs[off : off + k])
        off += k

    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 1]))
    samples = []
    for i in range(spec.n_samples):
        groups = tuple(int(rng.choice(len(p), p=p)) for p in priors)
        if spec.label_prior_per_group:
            rates = [
                spec.label_prior_per_group[schema.names[m]][groups[m]]
                for m in range(schema.M)
                if schema.names[m] in spec.label_prior_per_group
            ]
            pos_rate = float(np.mean(rates)) if rates else 0.5
        else:
            pos_rate = 0.5
        label = int(rng.random() < pos_rate)

        x = (label - 0.5) * spec.class_separation * label_dir
        for m, g in enumerate(groups):
            x = x + spec.bias_strength * group_dirs[m][g]
        x = x + spec.noise_std * rng.standard_normal(spec.d_in)

        notes = synthesize_notes(
            label, groups, schema, spec.note_variants_k,
            seed=int(np.random.SeedSequence([spec.seed, 2, i]).generate_state(1)[0]),
        )
        samples.append(Sample(i, x, notes, groups, label))
    return samples


# -- dataset files (one JSON object per line) -------------------------------

def save_dataset(samples: list[Sample], path, schema: AttributeSchema):
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            rec = {
                "id": s.id,
                "image_features": [float(v) for v in s.image_features],
                "label": s.label,
                "attributes": {
                    schema.names[m]: schema.values(m)[g]
                    for m, g in enumerate(s.attribute_values)
                },
                "notes": {
                    "neutral": s.note_variants.neutral,
                    "randomized": list(s.note_variants.randomized),
                },
            }
            fh.write(json.dumps(rec) + "\n")


def load_dataset(path, schema: AttributeSchema) -> list[Sample]:
    from .notes import NoteVariants

    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"invalid JSON ({e.msg})", line=lineno) from None
            try:
                groups = []
                for m, name in enumerate(schema.names):
                    if name not in rec["attributes"]:
                        raise SchemaError(f"missing attribute {name!r}")
                    try:
                        groups.append(schema.group_index(m, rec["attributes"][name]))
                    except SchemaError as e:
                        raise SchemaError(f"field {name!r}: {e}") from None
                notes = NoteVariants(
                    neutral=rec["notes"]["neutral"],
                    randomized=tuple(rec["notes"]["randomized"]),
                )
                sample = Sample(
                    id=int(rec["id"]),
                    image_features=np.asarray(rec["image_features"], dtype=np.float64),
                    note_variants=notes,
                    attribute_values=tuple(groups),
                    label=int(rec["label"]),
                )
            except KeyError as e:
                raise ParseError(f"missing field {e.args[0]!r}", line=lineno) from None
            except SchemaError as e:
                raise SchemaError(f"line {lineno}: {e}") from None
            sample.validate(schema)
            samples.append(sample)
    return samples


def load_schema(path) -> AttributeSchema:
    with open(path, encoding="utf-8") as fh:
        return AttributeSchema.from_dict(json.load(fh))


def save_schema(schema: AttributeSchema, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema.to_dict(), fh, indent=2)


# -- batching ---------------------------------------------------------------

@dataclass
class Batch:
    samples: list[Sample]

    @property
    def size(self) -> int:
        return len(self.samples)

    @property
    def ids(self) -> list[int]:
        return [s.id for s in self.samples]

    def features(self) -> np.ndarray:
        return np.stack([s.image_features for s in self.samples])

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples])

    def attribute_matrix(self) -> np.ndarray:
        return np.array([s.attribute_values for s in self.samples], dtype=np.int64)


def make_batches(samples: list[Sample], batch_size: int, seed: int,
                 drop_last: bool = True) -> list[Batch]:
    if batch_size < 2:
        raise ConfigError("batch_size must be >= 2")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(samples))
    shuffled = [samples[i] for i in order]
    batches = []
    for start in range(0, len(shuffled), batch_size):
        chunk = shuffled[start : start + batch_size]
        if drop_last and len(chunk) < batch_size:
            break
        batches.append(Batch(chunk))
    return batches
