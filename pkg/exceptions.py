"""Exception hierarchy shared by the simulator, the CLI and the HTTP API."""

from typing import Optional


class SqpcError(Exception):
    """Base class for every error raised by this package"""


# ============================================
# STATE-VECTOR ERRORS
# ============================================

class QubitIndexError(SqpcError, ValueError):
    """Qubit index out of range or repeated"""


class DimensionMismatchError(SqpcError, ValueError):
    """Two states (or a state and an operator) have incompatible sizes"""


class InvalidPairingError(SqpcError, ValueError):
    """A Bell pairing does not cover all four qubits exactly once"""


class NormalizationError(SqpcError, ValueError):
    """Amplitudes do not describe a normalized pure state"""


class NonUnitaryError(SqpcError, ValueError):
    """An operator offered as a gate is not unitary"""


class EntangledSubsystemError(SqpcError):
    """A subsystem was requested as a pure state but is entangled with the rest"""


# ============================================
# PROTOCOL ERRORS
# ============================================

class IncompleteRecordError(SqpcError):
    """A group record lacks the announcements needed for sifting"""


class LengthMismatchError(SqpcError, ValueError):
    """Secrets, keys or ciphertexts of different lengths were combined"""


class KeyConsistencyViolation(SqpcError):
    """Alice and Bob disagree on a K_AB bit in a run with no adversary"""

    def __init__(self, group_index: int, position: int, alice_bit: int, bob_bit: int):
        self.group_index = group_index
        self.position = position
        self.alice_bit = alice_bit
        self.bob_bit = bob_bit
        super().__init__(
            f"K_AB bit disagreement in group {group_index}, qubit {position}: "
            f"alice={alice_bit} bob={bob_bit}"
        )


class InsufficientKey(SqpcError):
    """A sifted key is shorter than the secret; the run needs fresh quantum resources"""

    def __init__(self, key_name: str, have: int, need: int, transcript: Optional[object] = None):
        self.key_name = key_name
        self.have = have
        self.need = need
        self.transcript = transcript
        super().__init__(f"{key_name} has {have} bits, {need} needed")


class DetectionAbort(SqpcError):
    """The eavesdropping checks failed more often than the threshold allows"""

    def __init__(self, violations: int, checks: int, threshold: float, transcript: Optional[object] = None):
        self.violations = violations
        self.checks = checks
        self.rate = violations / checks if checks else 0.0
        self.threshold = threshold
        self.transcript = transcript
        super().__init__(
            f"{violations}/{checks} checks failed (rate {self.rate:.4f} > threshold {threshold})"
        )


# ============================================
# SURFACE ERRORS
# ============================================

class ConfigError(SqpcError):
    """Invalid run configuration (flag, file or request body)"""


class UnknownAttackError(ConfigError):
    """No attack strategy is registered under the given name"""


class UnknownScenarioError(ConfigError):
    """No circuit scenario is registered under the given name"""
