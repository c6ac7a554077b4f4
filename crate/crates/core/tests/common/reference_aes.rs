//! Byte-oriented reference AES-128 used as a test oracle. Shares no code or
//! tables with the crate: the S-box is rebuilt from the field inverse and the
//! affine map, rounds are SubBytes/ShiftRows/MixColumns on a 4x4 state.
#![allow(dead_code)]

pub fn gf_mul(mut a: u8, mut b: u8) -> u8 {
    let mut r = 0u8;
    while b != 0 {
        if b & 1 == 1 {
            r ^= a;
        }
        let hi = a & 0x80;
        a <<= 1;
        if hi != 0 {
            a ^= 0x1b;
        }
        b >>= 1;
    }
    r
}

fn gf_inv(x: u8) -> u8 {
    // x^254
    let mut acc = 1u8;
    for _ in 0..254 {
        acc = gf_mul(acc, x);
    }
    acc
}

pub fn sbox() -> [u8; 256] {
    static SBOX: std::sync::OnceLock<[u8; 256]> = std::sync::OnceLock::new();
    *SBOX.get_or_init(build_sbox)
}

fn build_sbox() -> [u8; 256] {
    let mut s = [0u8; 256];
    for (x, out) in s.iter_mut().enumerate() {
        let b = gf_inv(x as u8);
        *out = b ^ b.rotate_left(1) ^ b.rotate_left(2) ^ b.rotate_left(3) ^ b.rotate_left(4) ^ 0x63;
    }
    s
}

pub fn inv_sbox() -> [u8; 256] {
    let s = sbox();
    let mut inv = [0u8; 256];
    for x in 0..256 {
        inv[s[x] as usize] = x as u8;
    }
    inv
}

/// Eleven round keys, each in state byte order.
pub fn key_schedule(key: &[u8; 16]) -> [[u8; 16]; 11] {
    let s = sbox();
    let mut w = [[0u8; 4]; 44];
    for i in 0..4 {
        w[i].copy_from_slice(&key[4 * i..4 * i + 4]);
    }
    let mut rcon = 1u8;
    for i in 4..44 {
        let mut t = w[i - 1];
        if i % 4 == 0 {
            t = [s[t[1] as usize] ^ rcon, s[t[2] as usize], s[t[3] as usize], s[t[0] as usize]];
            rcon = gf_mul(rcon, 2);
        }
        for j in 0..4 {
            w[i][j] = w[i - 4][j] ^ t[j];
        }
    }
    let mut out = [[0u8; 16]; 11];
    for r in 0..11 {
        for c in 0..4 {
            out[r][4 * c..4 * c + 4].copy_from_slice(&w[4 * r + c]);
        }
    }
    out
}

pub fn mix_column(a: [u8; 4]) -> [u8; 4] {
    let m = [[2, 3, 1, 1], [1, 2, 3, 1], [1, 1, 2, 3], [3, 1, 1, 2]];
    core::array::from_fn(|r| (0..4).fold(0, |acc, i| acc ^ gf_mul(m[r][i], a[i])))
}

pub fn inv_mix_column(a: [u8; 4]) -> [u8; 4] {
    let m = [[14, 11, 13, 9], [9, 14, 11, 13], [13, 9, 14, 11], [11, 13, 9, 14]];
    core::array::from_fn(|r| (0..4).fold(0, |acc, i| acc ^ gf_mul(m[r][i], a[i])))
}

pub fn sub_bytes(st: &mut [u8; 16]) {
    let s = sbox();
    for b in st.iter_mut() {
        *b = s[*b as usize];
    }
}

/// Byte at (row r, column c) lives at index 4c + r.
pub fn shift_rows(st: &mut [u8; 16]) {
    let old = *st;
    for r in 0..4 {
        for c in 0..4 {
            st[4 * c + r] = old[4 * ((c + r) % 4) + r];
        }
    }
}

pub fn mix_columns(st: &mut [u8; 16]) {
    for c in 0..4 {
        let col = mix_column(st[4 * c..4 * c + 4].try_into().unwrap());
        st[4 * c..4 * c + 4].copy_from_slice(&col);
    }
}

fn add(st: &mut [u8; 16], k: &[u8; 16]) {
    for i in 0..16 {
        st[i] ^= k[i];
    }
}

pub fn encrypt(key: &[u8; 16], pt: &[u8; 16]) -> [u8; 16] {
    let ks = key_schedule(key);
    let mut st = *pt;
    add(&mut st, &ks[0]);
    for r in 1..10 {
        sub_bytes(&mut st);
        shift_rows(&mut st);
        mix_columns(&mut st);
        add(&mut st, &ks[r]);
    }
    sub_bytes(&mut st);
    shift_rows(&mut st);
    add(&mut st, &ks[10]);
    st
}

/// Applies the last round (SubBytes, ShiftRows, key) to a round-10 input.
pub fn last_round(input: &[u8; 16], k10: &[u8; 16]) -> [u8; 16] {
    let mut st = *input;
    sub_bytes(&mut st);
    shift_rows(&mut st);
    add(&mut st, k10);
    st
}
