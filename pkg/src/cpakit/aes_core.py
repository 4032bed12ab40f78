"""AES-128 primitives used by the attack and the trace simulator.

State bytes follow the FIPS-197 column-major convention: byte ``i`` of a
16-byte block sits at row ``i % 4``, column ``i // 4``. Ciphertext byte ``i``
is therefore state byte ``i`` after the last round.

Everything here operates either on single 16-byte blocks (``bytes``) or, for
the batch helpers, on ``(n, 16)`` uint8 arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

BLOCK_SIZE = 16
ROUNDS = 10

RCON = (0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36)


def _gf_mul(a: int, b: int) -> int:
    """Multiply in GF(2^8) modulo x^8 + x^4 + x^3 + x + 1."""
    p = 0
    while b:
        if b & 1:
            p ^= a
        a <<= 1
        if a & 0x100:
            a ^= 0x11B
        b >>= 1
    return p


def _gf_inv(a: int) -> int:
    # a^254 = a^-1 for a != 0; maps 0 to 0 as AES requires.
    result = 1
    base = a
    e = 254
    while e:
        if e & 1:
            result = _gf_mul(result, base)
        base = _gf_mul(base, base)
        e >>= 1
    return result if a else 0


def _rotl8(x: int, s: int) -> int:
    return ((x << s) | (x >> (8 - s))) & 0xFF


def _build_sbox() -> npt.NDArray[np.uint8]:
    table = np.empty(256, dtype=np.uint8)
    for x in range(256):
        b = _gf_inv(x)
        table[x] = b ^ _rotl8(b, 1) ^ _rotl8(b, 2) ^ _rotl8(b, 3) ^ _rotl8(b, 4) ^ 0x63
    return table


SBOX = _build_sbox()
INV_SBOX = np.argsort(SBOX).astype(np.uint8)
HAMMING_WEIGHT = np.array([bin(x).count("1") for x in range(256)], dtype=np.uint8)

# SHIFTROWS_SOURCE[b] is the input position that ShiftRows moves to output b.
SHIFTROWS_SOURCE = np.array(
    [(b % 4) + 4 * (((b // 4) + (b % 4)) % 4) for b in range(16)], dtype=np.intp
)

for _t in (SBOX, INV_SBOX, HAMMING_WEIGHT, SHIFTROWS_SOURCE):
    _t.flags.writeable = False


def _block(data, name: str = "block") -> bytes:
    block = bytes(data)
    if len(block) != BLOCK_SIZE:
        raise ValueError(f"{name} must be exactly 16 bytes, got {len(block)}")
    return block


def sbox(x: int) -> int:
    return int(SBOX[x])


def inv_sbox(x: int) -> int:
    return int(INV_SBOX[x])


def shiftrows_source_index(b: int) -> int:
    """Return the pre-ShiftRows state position that lands at position ``b``."""
    if not 0 <= b < BLOCK_SIZE:
        raise IndexError(f"byte position must be in 0..15, got {b}")
    return int(SHIFTROWS_SOURCE[b])


def hamming_distance(a: int, b: int) -> int:
    return int(HAMMING_WEIGHT[(a ^ b) & 0xFF])


def expand_key(key) -> list[bytes]:
    """Expand a 16-byte master key into the 11 AES-128 round keys."""
    key = _block(key, "key")
    words = [list(key[4 * c : 4 * c + 4]) for c in range(4)]
    for i in range(4, 4 * (ROUNDS + 1)):
        temp = list(words[i - 1])
        if i % 4 == 0:
            temp = temp[1:] + temp[:1]
            temp = [int(SBOX[t]) for t in temp]
            temp[0] ^= RCON[i // 4 - 1]
        words.append([w ^ t for w, t in zip(words[i - 4], temp)])
    return [bytes(sum(words[4 * r : 4 * r + 4], [])) for r in range(ROUNDS + 1)]


def invert_key_schedule(round_key, round_index: int = ROUNDS) -> bytes:
    """Run the key schedule backwards from round ``round_index`` to the master key.

    AES-128 expansion is a bijection between consecutive round keys, so the
    preimage is unique.
    """
    if not 0 <= round_index <= ROUNDS:
        raise ValueError(f"round index must be in 0..10, got {round_index}")
    k = list(_block(round_key, "round key"))
    for r in range(round_index, 0, -1):
        # Columns 3..1: w[i] = w[i-4] ^ w[i-1]  =>  w[i-4] = w[i] ^ w[i-1].
        for c in (3, 2, 1):
            for row in range(4):
                k[4 * c + row] ^= k[4 * (c - 1) + row]
        # k[12:16] now holds the previous round's last column.
        rot = k[13:16] + k[12:13]
        k[0] ^= int(SBOX[rot[0]]) ^ RCON[r - 1]
        k[1] ^= int(SBOX[rot[1]])
        k[2] ^= int(SBOX[rot[2]])
        k[3] ^= int(SBOX[rot[3]])
    return bytes(k)


def selection_value(cipher, byte_pos: int, key_guess: int) -> int:
    """Predicted Hamming distance of the last-round register update.

    The guessed subkey undoes the final AddRoundKey and SubBytes for ciphertext
    byte ``byte_pos``, which yields the round-9 state byte at
    ``shiftrows_source_index(byte_pos)``. That register is then overwritten by
    the ciphertext byte at the same position.
    """
    src = shiftrows_source_index(byte_pos)
    predicted = INV_SBOX[cipher[byte_pos] ^ key_guess]
    return int(HAMMING_WEIGHT[predicted ^ cipher[src]])


def selection_values(ciphertexts: npt.NDArray[np.uint8]) -> npt.NDArray[np.uint8]:
    """All selection values for a batch, shape ``(n, 16, 256)`` indexed (i, b, k)."""
    ct = np.asarray(ciphertexts, dtype=np.uint8).reshape(-1, BLOCK_SIZE)
    guesses = np.arange(256, dtype=np.uint8)
    predicted = INV_SBOX[ct[:, :, None] ^ guesses[None, None, :]]
    return HAMMING_WEIGHT[predicted ^ ct[:, SHIFTROWS_SOURCE][:, :, None]]


# --- batch encryption ------------------------------------------------------


def _xtime(a: npt.NDArray[np.uint8]) -> npt.NDArray[np.uint8]:
    hi = a & 0x80
    out = (a << 1) & 0xFF
    return (out ^ np.where(hi != 0, 0x1B, 0)).astype(np.uint8)


def _mix_columns(s: npt.NDArray[np.uint8]) -> npt.NDArray[np.uint8]:
    cols = s.reshape(-1, 4, 4)  # (n, column, row)
    a0, a1, a2, a3 = (cols[:, :, r] for r in range(4))
    t = a0 ^ a1 ^ a2 ^ a3
    out = np.empty_like(cols)
    out[:, :, 0] = a0 ^ t ^ _xtime(a0 ^ a1)
    out[:, :, 1] = a1 ^ t ^ _xtime(a1 ^ a2)
    out[:, :, 2] = a2 ^ t ^ _xtime(a2 ^ a3)
    out[:, :, 3] = a3 ^ t ^ _xtime(a3 ^ a0)
    return out.reshape(-1, BLOCK_SIZE)


def final_round(states: npt.NDArray[np.uint8], round_key) -> npt.NDArray[np.uint8]:
    """SubBytes, ShiftRows and AddRoundKey without MixColumns."""
    rk = np.frombuffer(_block(round_key, "round key"), dtype=np.uint8)
    s = np.asarray(states, dtype=np.uint8).reshape(-1, BLOCK_SIZE)
    return SBOX[s][:, SHIFTROWS_SOURCE] ^ rk


def encrypt_batch_with_states(
    plaintexts: npt.NDArray[np.uint8], key
) -> tuple[npt.NDArray[np.uint8], npt.NDArray[np.uint8]]:
    """Encrypt ``(n, 16)`` plaintexts; return (ciphertexts, round-9 output states)."""
    round_keys = [np.frombuffer(rk, dtype=np.uint8) for rk in expand_key(key)]
    s = np.asarray(plaintexts, dtype=np.uint8).reshape(-1, BLOCK_SIZE) ^ round_keys[0]
    for r in range(1, ROUNDS):
        s = _mix_columns(SBOX[s][:, SHIFTROWS_SOURCE]) ^ round_keys[r]
    return final_round(s, bytes(round_keys[ROUNDS])), s


@dataclass(frozen=True)
class StateTrace:
    ciphertext: bytes
    round9_state: bytes  # state entering the final round


def encrypt_with_states(plaintext, key) -> StateTrace:
    pt = np.frombuffer(_block(plaintext, "plaintext"), dtype=np.uint8)
    ct, s9 = encrypt_batch_with_states(pt[None, :], key)
    return StateTrace(ciphertext=ct[0].tobytes(), round9_state=s9[0].tobytes())
