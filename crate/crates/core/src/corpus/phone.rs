use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PhoneClass {
    VoicelessStop,
    VoicedStop,
    Nasal,
    Fricative,
    Sibilant,
    LiquidGlide,
    Vowel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phone {
    P,
    T,
    K,
    B,
    D,
    G,
    V,
    M,
    N,
    S,
    L,
    R,
    J,
    A,
    I,
    U,
    Schwa,
}

impl Phone {
    pub const ALL: [Phone; 17] = [
        Phone::P,
        Phone::T,
        Phone::K,
        Phone::B,
        Phone::D,
        Phone::G,
        Phone::V,
        Phone::M,
        Phone::N,
        Phone::S,
        Phone::L,
        Phone::R,
        Phone::J,
        Phone::A,
        Phone::I,
        Phone::U,
        Phone::Schwa,
    ];

    pub fn class(self) -> PhoneClass {
        use Phone::*;
        match self {
            P | T | K => PhoneClass::VoicelessStop,
            B | D | G => PhoneClass::VoicedStop,
            M | N => PhoneClass::Nasal,
            V => PhoneClass::Fricative,
            S => PhoneClass::Sibilant,
            L | R | J => PhoneClass::LiquidGlide,
            A | I | U | Schwa => PhoneClass::Vowel,
        }
    }

    pub fn is_vowel(self) -> bool {
        self.class() == PhoneClass::Vowel
    }

    pub fn symbol(self) -> &'static str {
        use Phone::*;
        match self {
            P => "p",
            T => "t",
            K => "k",
            B => "b",
            D => "d",
            G => "g",
            V => "v",
            M => "m",
            N => "n",
            S => "s",
            L => "l",
            R => "r",
            J => "j",
            A => "a",
            I => "i",
            U => "u",
            Schwa => "ə",
        }
    }

    /// Parses a compact word such as `"pəpali"` (or `"p@pali"`) into phones.
    pub fn parse_word(word: &str) -> Result<Vec<Phone>> {
        word.chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| c.to_string().parse())
            .collect()
    }

    pub fn word(phones: &[Phone]) -> String {
        phones.iter().map(|p| p.symbol()).collect()
    }
}

impl fmt::Display for Phone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Phone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "@" {
            return Ok(Phone::Schwa);
        }
        Phone::ALL
            .iter()
            .copied()
            .find(|p| p.symbol() == s)
            .ok_or_else(|| Error::invalid(format!("unknown phone '{s}'")))
    }
}
