"""Model assembly: every parameter bundle plus the shared encode path."""

from dataclasses import dataclass

from .diffmath import ParameterStore
from .diffmath.rng import STREAM_INIT, make_rng
from .encoder import (
    CharVocab,
    ContextEmbedding,
    EncoderConfig,
    EncoderParams,
    Vocab,
    bidaf_attention,
    contextualize,
    embed_tokens,
    init_encoder_params,
    self_attend,
)
from .paragraph_quality import QualityParams, init_quality_params
from .span_decoder import SpanDecoderParams, init_span_decoder_params


@dataclass
class QaModel:
    config: EncoderConfig
    vocab: Vocab
    char_vocab: CharVocab
    encoder: EncoderParams
    decoder: SpanDecoderParams
    quality: QualityParams
    store: ParameterStore
    grad_through_start: bool = True

    @classmethod
    def create(
        cls,
        config: EncoderConfig,
        vocab: Vocab,
        char_vocab: CharVocab,
        seed: int = 0,
        word_init=None,
        grad_through_start: bool = True,
    ) -> "QaModel":
        """Build freshly initialized parameters; the draw order is fixed so a
        given (config, vocab, seed) always produces the same weights."""
        rng = make_rng(seed, STREAM_INIT)
        encoder = init_encoder_params(config, len(vocab), len(char_vocab), rng, word_init)
        decoder = init_span_decoder_params(config.hidden_dim, rng)
        quality = init_quality_params(config.hidden_dim, rng)
        store = ParameterStore()
        for prefix, bundle in (("enc", encoder), ("dec", decoder), ("qual", quality)):
            for name, tensor in bundle.tensors():
                store.register(f"{prefix}/{name}", tensor)
        return cls(
            config=config,
            vocab=vocab,
            char_vocab=char_vocab,
            encoder=encoder,
            decoder=decoder,
            quality=quality,
            store=store,
            grad_through_start=grad_through_start,
        )

    def encode_paragraph(self, question_tokens, paragraph_tokens, rng=None, training: bool = False) -> ContextEmbedding:
        """Question-aware context embedding (n, 2d) for one paragraph.

        `rng` drives dropout and is only consulted in training mode with
        keep_prob < 1, so evaluation never touches it.
        """
        keep = self.config.keep_prob
        q_emb = embed_tokens(question_tokens, self.vocab, self.char_vocab, self.encoder)
        p_emb = embed_tokens(paragraph_tokens, self.vocab, self.char_vocab, self.encoder)
        q_ctx = contextualize(q_emb, self.encoder.q_ctx, keep, rng, training)
        p_ctx = contextualize(p_emb, self.encoder.p_ctx, keep, rng, training)
        return self_attend(bidaf_attention(p_ctx, q_ctx, self.encoder), self.encoder)
