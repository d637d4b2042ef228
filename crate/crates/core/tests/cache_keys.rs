use deskact::gateway::{ChatRequest, ImagePayload, Message, Part, Role};
use proptest::prelude::*;

fn request(texts: &[String], image: &[u8]) -> ChatRequest {
    let mut messages = vec![Message::text(Role::System, "system")];
    let mut parts: Vec<Part> = texts.iter().cloned().map(Part::Text).collect();
    parts.push(Part::Image(ImagePayload::png(image.to_vec())));
    messages.push(Message::new(Role::User, parts));
    ChatRequest::new("step", "model", messages)
}

proptest! {
    #[test]
    fn key_is_stable_and_tag_free(texts in prop::collection::vec(".{0,20}", 1..4), image in prop::collection::vec(any::<u8>(), 1..64), tag in "[a-z.]{1,12}") {
        let a = request(&texts, &image);
        let mut b = request(&texts, &image);
        b.tag = tag;
        prop_assert_eq!(a.cache_key(), b.cache_key());
    }

    #[test]
    fn text_edit_changes_key(texts in prop::collection::vec(".{0,20}", 1..4), image in prop::collection::vec(any::<u8>(), 1..64), which in any::<prop::sample::Index>(), extra in ".{1,5}") {
        let a = request(&texts, &image);
        let mut edited = texts.clone();
        edited[which.index(texts.len())].push_str(&extra);
        prop_assert_ne!(a.cache_key(), request(&edited, &image).cache_key());
    }

    #[test]
    fn image_byte_flip_changes_key(texts in prop::collection::vec(".{0,20}", 1..4), image in prop::collection::vec(any::<u8>(), 1..64), which in any::<prop::sample::Index>()) {
        let a = request(&texts, &image);
        let mut flipped = image.clone();
        flipped[which.index(image.len())] ^= 0x01;
        prop_assert_ne!(a.cache_key(), request(&texts, &flipped).cache_key());
    }

    #[test]
    fn sampling_settings_change_key(texts in prop::collection::vec(".{0,20}", 1..4), max_output in 1u32..4096) {
        let a = request(&texts, b"png");
        let mut hot = a.clone();
        hot.temperature = 0.5;
        let mut short = a.clone();
        short.max_output = max_output;
        let mut other_model = a.clone();
        other_model.model_id = "other".into();
        prop_assert_ne!(a.cache_key(), hot.cache_key());
        prop_assert_ne!(a.cache_key(), short.cache_key());
        prop_assert_ne!(a.cache_key(), other_model.cache_key());
    }
}
