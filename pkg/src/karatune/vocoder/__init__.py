"""Pitch-controllable neural vocoder: SF block, RCG generator, discriminators, losses."""
from .discriminators import DiscriminatorBanks, PeriodDiscriminator, ScaleDiscriminator, discriminate
from .generator import MRFResBlock, RCGenerator, VocoderConfig, rcg_generate
from .losses import (adversarial_generator_loss, discriminator_loss, feature_matching_loss, generator_loss,
                     stft_loss)
from .sf_block import PitchBinning, SFBlock, SFResBlock, harmonic_comb, sf_block
from .training import SFVocoder, SFVocoderNet, VocoderTrainConfig, synthesize, train_vocoder
