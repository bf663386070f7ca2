//! The 43-symbol phone inventory.
//!
//! Twelve vowels, thirty consonants in a romanised Hindi label set, and `SP`
//! for silence inside a phrase.

pub const PHONES: [&str; 43] = [
    "a", "aa", "i", "ii", "u", "uu", "e", "ee", "ai", "o", "oo", "au", //
    "k", "kh", "g", "gh", "c", "ch", "j", "jh", "tx", "txh", "dx", "dxh", "nx", //
    "t", "th", "d", "dh", "n", "p", "ph", "b", "bh", "m", //
    "y", "r", "l", "w", "sh", "s", "h", //
    "SP",
];

pub const SILENCE: &str = "SP";

pub fn phone_id(phone: &str) -> Option<usize> {
    PHONES.iter().position(|p| *p == phone)
}

pub fn is_vowel(phone: &str) -> bool {
    phone_id(phone).is_some_and(|id| id < 12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn inventory_has_43_distinct_symbols() {
        let set: HashSet<_> = PHONES.iter().collect();
        assert_eq!(set.len(), 43);
        assert_eq!(phone_id(SILENCE), Some(42));
        assert!(is_vowel("aa") && !is_vowel("k") && !is_vowel("SP"));
        assert_eq!(phone_id("zz"), None);
    }
}
