"""Facial attribute descriptors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_ATTRIBUTES = 38
NEUTRAL = 0.5

CELEBA_ATTRIBUTES = (
    "5_o_Clock_Shadow", "Arched_Eyebrows", "Attractive", "Bags_Under_Eyes", "Bald",
    "Bangs", "Big_Lips", "Big_Nose", "Black_Hair", "Blond_Hair",
    "Blurry", "Brown_Hair", "Bushy_Eyebrows", "Chubby", "Double_Chin",
    "Eyeglasses", "Goatee", "Gray_Hair", "Heavy_Makeup", "High_Cheekbones",
    "Male", "Mouth_Slightly_Open", "Mustache", "Narrow_Eyes", "No_Beard",
    "Oval_Face", "Pale_Skin", "Pointy_Nose", "Receding_Hairline", "Rosy_Cheeks",
    "Sideburns", "Smiling", "Straight_Hair", "Wavy_Hair", "Wearing_Earrings",
    "Wearing_Hat", "Wearing_Lipstick", "Wearing_Necklace", "Wearing_Necktie", "Young",
)  # fmt: skip

# below-the-chin accessories leave a tight 128x128 face crop
DEFAULT_DROPPED = ("Wearing_Necklace", "Wearing_Necktie")
ATTRIBUTE_NAMES = tuple(a for a in CELEBA_ATTRIBUTES if a not in DEFAULT_DROPPED)

# attributes the synthetic face renderer can draw, keyed by short name
SYNTH_ATTRIBUTES = {
    "big_nose": "Big_Nose",
    "eyeglasses": "Eyeglasses",
    "goatee": "Goatee",
    "mustache": "Mustache",
    "narrow_eyes": "Narrow_Eyes",
    "mouth_open": "Mouth_Slightly_Open",
}


@dataclass
class AttributeVector:
    """38 attribute values in [0, 1] and which of them are known.

    Unknown entries hold the neutral value 0.5.
    """

    values: np.ndarray
    known_mask: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float32).reshape(-1)
        if self.values.size != N_ATTRIBUTES:
            raise ValueError(f"expected {N_ATTRIBUTES} attributes, got {self.values.size}")
        if self.known_mask is None:
            self.known_mask = np.ones(N_ATTRIBUTES, dtype=bool)
        self.known_mask = np.asarray(self.known_mask, dtype=bool).reshape(-1)
        if self.known_mask.size != N_ATTRIBUTES:
            raise ValueError("known_mask must have one flag per attribute")

    @classmethod
    def from_signed(cls, signed) -> "AttributeVector":
        """Map dataset annotations {-1, +1} to {0, 1}."""
        s = np.asarray(signed, dtype=np.float32)
        return cls((s > 0).astype(np.float32))

    @classmethod
    def neutral(cls) -> "AttributeVector":
        return cls(np.full(N_ATTRIBUTES, NEUTRAL), np.zeros(N_ATTRIBUTES, bool))

    def to_signed(self) -> np.ndarray:
        return np.where(self.values >= NEUTRAL, 1, -1).astype(np.int64)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AttributeVector):
            return NotImplemented
        return bool(np.array_equal(self.values, other.values) and np.array_equal(self.known_mask, other.known_mask))


def stack(attrs) -> np.ndarray:
    """Batch a sequence of AttributeVectors (or raw rows) into an (N, 38) float32 array."""
    rows = [a.values if isinstance(a, AttributeVector) else np.asarray(a, np.float32) for a in attrs]
    return np.stack(rows).astype(np.float32)
