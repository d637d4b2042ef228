//! Prompt templates shipped with the crate. Dynamic inputs (frames, records,
//! window ranges) travel in separate message parts, so templates are sent
//! byte-for-byte.

use std::sync::OnceLock;

use crate::gateway::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptName {
    DfProposer,
    DfCorrector,
    DfMerger,
    DifffDescriptor,
    DifffProposer,
    DifffCorrector,
}

impl PromptName {
    pub const ALL: [PromptName; 6] = [
        PromptName::DfProposer,
        PromptName::DfCorrector,
        PromptName::DfMerger,
        PromptName::DifffDescriptor,
        PromptName::DifffProposer,
        PromptName::DifffCorrector,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptName::DfProposer => "df_proposer",
            PromptName::DfCorrector => "df_corrector",
            PromptName::DfMerger => "df_merger",
            PromptName::DifffDescriptor => "difff_descriptor",
            PromptName::DifffProposer => "difff_proposer",
            PromptName::DifffCorrector => "difff_corrector",
        }
    }

    fn text(self) -> &'static str {
        match self {
            PromptName::DfProposer => include_str!("../prompts/df_proposer.txt"),
            PromptName::DfCorrector => include_str!("../prompts/df_corrector.txt"),
            PromptName::DfMerger => include_str!("../prompts/df_merger.txt"),
            PromptName::DifffDescriptor => include_str!("../prompts/difff_descriptor.txt"),
            PromptName::DifffProposer => include_str!("../prompts/difff_proposer.txt"),
            PromptName::DifffCorrector => include_str!("../prompts/difff_corrector.txt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptAsset {
    pub name: PromptName,
    pub text: &'static str,
    /// SHA-256 of `text`.
    pub version: String,
}

pub fn prompt(name: PromptName) -> &'static PromptAsset {
    static ASSETS: OnceLock<Vec<PromptAsset>> = OnceLock::new();
    let assets = ASSETS.get_or_init(|| {
        PromptName::ALL
            .iter()
            .map(|&name| PromptAsset {
                name,
                text: name.text(),
                version: sha256_hex(name.text().as_bytes()),
            })
            .collect()
    });
    &assets[PromptName::ALL.iter().position(|n| *n == name).expect("listed prompt")]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assets_are_distinct_and_versioned() {
        let versions: std::collections::BTreeSet<_> =
            PromptName::ALL.iter().map(|n| prompt(*n).version.clone()).collect();
        assert_eq!(versions.len(), 6);
        for n in PromptName::ALL {
            let p = prompt(n);
            assert_eq!(p.version, sha256_hex(p.text.as_bytes()));
            assert!(p.text.ends_with('\n'));
        }
    }

    #[test]
    fn templates_carry_their_output_contracts() {
        assert!(prompt(PromptName::DfProposer).text.contains("\"user_operations\""));
        assert!(prompt(PromptName::DfCorrector).text.contains("'user_operations' key with an empty list"));
        assert!(prompt(PromptName::DifffDescriptor).text.contains("\"new_cursor_shape\""));
        assert!(prompt(PromptName::DifffProposer).text.contains("\"evidences\""));
        assert!(prompt(PromptName::DifffCorrector).text.contains("<TASK 8>"));
    }
}
