//! Hand-built metric cases shared by the oracle comparison tests.

/// (candidate, references of the scored image, other images in the corpus)
pub struct Case {
    pub name: &'static str,
    pub cand: &'static str,
    pub refs: &'static [&'static str],
    pub others: &'static [&'static [&'static str]],
}

pub const CASES: &[Case] = &[
    Case { name: "exact single ref", cand: "a cat sits", refs: &["a cat sits"], others: &[&["a dog runs"]] },
    Case { name: "zero overlap", cand: "blue green red", refs: &["a cat sits"], others: &[&["a dog runs"]] },
    Case { name: "appended six", cand: "a cat sits p q r s t u", refs: &["a cat sits"], others: &[&["a dog runs"]] },
    Case { name: "brevity", cand: "a b c d", refs: &["a b c d e"], others: &[&["x y z"]] },
    Case { name: "rouge hand", cand: "a b c", refs: &["a c"], others: &[&["d e"]] },
    Case {
        name: "five refs mainstream",
        cand: "a man is working on a laptop",
        refs: &[
            "a man is working on a laptop next to computers",
            "several students working at a desk with computers",
            "people in a large room use multiple computers",
            "a young man is working at his laptop",
            "a young man at his workstation examines the monitor",
        ],
        others: &[&["a dog runs in the park", "a brown dog running on grass"], &["two people ride horses", "a man on a horse"]],
    },
    Case {
        name: "repeated tokens clipped",
        cand: "the the the the cat",
        refs: &["the cat is on the mat", "there is a cat on the mat"],
        others: &[&["a dog on a rug"]],
    },
    Case { name: "one word", cand: "cat", refs: &["a cat", "cat"], others: &[&["dog"], &["bird"]] },
    Case {
        name: "reordered",
        cand: "mat the on sits cat the",
        refs: &["the cat sits on the mat"],
        others: &[&["a dog lies on a rug"]],
    },
    Case {
        name: "partial overlap long",
        cand: "a group of people standing around a kitchen counter",
        refs: &["people standing in a kitchen", "a group of friends cooking together in a kitchen", "a kitchen with people"],
        others: &[&["a kitchen with a stove"], &["people on a beach"], &["a group of birds"]],
    },
    Case {
        name: "all df equal N",
        cand: "a b",
        refs: &["a b"],
        others: &[&["a b"], &["a b"]],
    },
    Case {
        name: "candidate longer than all",
        cand: "a small dog plays with a red ball in the green park today",
        refs: &["a dog plays", "dog with ball"],
        others: &[&["cat sleeps"]],
    },
    Case {
        name: "shorter than refs",
        cand: "dog",
        refs: &["a small dog plays with a ball", "the dog is playing"],
        others: &[&["a cat"]],
    },
    Case {
        name: "duplicate refs",
        cand: "a bus on the street",
        refs: &["a bus on the street", "a bus on the street", "a red bus driving down a road"],
        others: &[&["a car on the street"], &["a train at a station"]],
    },
    Case {
        name: "bigram only overlap",
        cand: "red ball green ball",
        refs: &["green ball red ball"],
        others: &[&["blue ball"]],
    },
    Case {
        name: "single image corpus",
        cand: "a cat on a mat",
        refs: &["a cat on the mat", "cat on mat"],
        others: &[],
    },
    Case {
        name: "unseen ngrams in candidate",
        cand: "zebra a cat quokka",
        refs: &["a cat", "the cat"],
        others: &[&["a dog"], &["the dog"]],
    },
    Case {
        name: "tie ref lengths",
        cand: "one two three four",
        refs: &["one two", "one two three four five six"],
        others: &[&["seven"]],
    },
    Case {
        name: "long refs many others",
        cand: "a person riding a wave on top of a surfboard",
        refs: &[
            "a surfer riding a wave on a surfboard",
            "a man surfing on a big wave",
            "person on a surfboard riding a wave",
            "a surfer in the ocean",
        ],
        others: &[
            &["a man riding a horse", "a person on a horse"],
            &["a surfboard on the beach"],
            &["waves crashing on the shore"],
            &["a person riding a bike"],
        ],
    },
    Case {
        name: "interleaved lcs",
        cand: "a x b y c z d",
        refs: &["a b c d", "x y z"],
        others: &[&["q"]],
    },
    Case {
        name: "palindromic",
        cand: "a b a b a",
        refs: &["b a b a b", "a a b b"],
        others: &[&["c c"]],
    },
    Case {
        name: "four gram exact inside",
        cand: "the quick brown fox",
        refs: &["see the quick brown fox jump"],
        others: &[&["a slow red fox"], &["the lazy dog"]],
    },
];
