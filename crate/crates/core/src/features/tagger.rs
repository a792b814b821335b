use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

/// Coarse part-of-speech tags used by `pos_pattern` rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PosTag {
    Noun,
    Verb,
    Adjective,
    Adverb,
    Pronoun,
    Interjection,
    Number,
    Other,
}

impl PosTag {
    pub fn name(self) -> &'static str {
        match self {
            PosTag::Noun => "noun",
            PosTag::Verb => "verb",
            PosTag::Adjective => "adjective",
            PosTag::Adverb => "adverb",
            PosTag::Pronoun => "pronoun",
            PosTag::Interjection => "interjection",
            PosTag::Number => "number",
            PosTag::Other => "other",
        }
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PosTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "noun" => PosTag::Noun,
            "verb" => PosTag::Verb,
            "adjective" => PosTag::Adjective,
            "adverb" => PosTag::Adverb,
            "pronoun" => PosTag::Pronoun,
            "interjection" => PosTag::Interjection,
            "number" => PosTag::Number,
            "other" => PosTag::Other,
            other => return Err(format!("unknown tag `{other}`")),
        })
    }
}

/// Tokens in, one tag per token out. Implementations must be deterministic.
pub trait PosTagger {
    fn tag(&self, tokens: &[&str]) -> Vec<PosTag>;
}

const PRONOUNS: &str = "i me my mine myself you your yours yourself yourselves we us our ours ourselves \
    they them their theirs he him his she her hers it its this that these those thats that's who whom whose \
    what which someone anyone everyone something anything everything nobody nothing somebody everybody u ur \
    i'm im you're youre we're they're it's";

const VERBS: &str = "am is are was were be been being r do does did dont don't doesnt doesn't didnt didn't \
    have has had havent haven't can could will would shall should may might must cannot cant can't wont won't \
    isnt isn't arent aren't wasnt wasn't get gets got go goes went gone see sees saw seen look looks check read \
    write type say says said tell told think thinks thought know knows knew want wants need needs make makes made \
    take takes took give gives gave discuss reduce reduces help helps try tries use uses find found work works \
    listen listens learn learns agree agrees finish complete submit start stop come comes came let lets wait put \
    keep feel feels seem seems become absorb absorbs consider mean means pollute protect save cut build grow \
    grows kill kills reply replied answer do done care cares teach teaches";

const ADJECTIVES: &str = "good bad nice kind great possible ideal important better best big small new old easy \
    hard difficult caring attentive funny humourous humorous true wrong sure happy sad cool awesome fast faster \
    slow quick green clean dirty same different correct strict patient fun boring fair smart friendly \
    environmental harmful useful whole real";

const ADVERBS: &str = "not very really just so too also now then here there always never maybe already still \
    soon later again only even quite almost quickly well yet instead first";

const INTERJECTIONS: &str = "yes yeah yep yup ok okay no nope hi hello hey lol haha hehe lah leh lor wow oh \
    um uh hmm ya bye thanks thx please pls omg eh sia sup";

const NUMBERS: &str = "one two three four five six seven eight nine ten eleven twelve twenty thirty hundred";

const OTHERS: &str = "the a an and or but if because of in on at to for with from by about as like than into \
    over under up down out off through during before after between against without within while since until";

const NOUNS: &str = "morning afternoon evening thing things teacher students student url link time question";

/// Closed-class word lists plus suffix heuristics over the coarse tag set.
/// Unknown open-class words fall back to noun.
#[derive(Debug, Clone, Default)]
pub struct LexiconTagger;

fn word_table() -> &'static HashMap<&'static str, PosTag> {
    static TABLE: OnceLock<HashMap<&'static str, PosTag>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = HashMap::new();
        // later lists win, so ambiguous words end up with the last tag listed
        for (words, tag) in [
            (NOUNS, PosTag::Noun),
            (ADJECTIVES, PosTag::Adjective),
            (VERBS, PosTag::Verb),
            (ADVERBS, PosTag::Adverb),
            (NUMBERS, PosTag::Number),
            (OTHERS, PosTag::Other),
            (PRONOUNS, PosTag::Pronoun),
            (INTERJECTIONS, PosTag::Interjection),
        ] {
            for w in words.split_whitespace() {
                table.insert(w, tag);
            }
        }
        table
    })
}

impl LexiconTagger {
    pub fn tag_word(&self, word: &str) -> PosTag {
        let w = word.to_lowercase();
        if let Some(tag) = word_table().get(w.as_str()) {
            return *tag;
        }
        if w.chars().any(|c| c.is_ascii_digit())
            && w.chars().all(|c| c.is_ascii_digit() || matches!(c, '.' | ',' | ':'))
        {
            return PosTag::Number;
        }
        if !w.chars().any(char::is_alphabetic) {
            return PosTag::Other;
        }
        let ends = |suffixes: &[&str]| suffixes.iter().any(|s| w.len() > s.len() + 1 && w.ends_with(s));
        if ends(&["ly"]) {
            PosTag::Adverb
        } else if ends(&["ing", "ed", "ise", "ize", "ify"]) {
            PosTag::Verb
        } else if ends(&["ous", "ful", "ive", "able", "ible", "less", "ic", "ish"]) {
            PosTag::Adjective
        } else {
            PosTag::Noun
        }
    }
}

impl PosTagger for LexiconTagger {
    fn tag(&self, tokens: &[&str]) -> Vec<PosTag> {
        tokens.iter().map(|t| self.tag_word(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(s: &str) -> Vec<PosTag> {
        let toks: Vec<&str> = s.split_whitespace().collect();
        LexiconTagger.tag(&toks)
    }

    #[test]
    fn example_sentences() {
        use PosTag::*;
        assert_eq!(tags("plants dont reduce smoke"), vec![Noun, Verb, Verb, Noun]);
        assert_eq!(
            tags("the teacher should be kind"),
            vec![Other, Noun, Verb, Verb, Adjective]
        );
        assert_eq!(
            tags("we have like 15 mins left"),
            vec![Pronoun, Verb, Other, Number, Noun, Noun]
        );
        assert_eq!(tags("good morning guys"), vec![Adjective, Noun, Noun]);
        assert_eq!(tags("just kidding"), vec![Adverb, Verb]);
        assert_eq!(tags("quietly"), vec![Adverb]);
    }

    #[test]
    fn output_length_matches_input() {
        let toks = ["a", "", "???", "{{x}}", "running"];
        assert_eq!(LexiconTagger.tag(&toks).len(), toks.len());
        assert_eq!(LexiconTagger.tag(&[]), vec![]);
    }
}
