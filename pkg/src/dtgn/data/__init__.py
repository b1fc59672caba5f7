from .echo import EchoSample, gen_echo_dataset, render_echo, stack_videos
from .glyphs import GlyphDataset, apply_perturbation, gen_morpho_dataset, measure
from .ingest import ingest_video_dir, write_video_dir
from .pgm import read_pgm, write_pgm
from .quintuplets import SEMISUPERVISED, SUPERVISED, Quintuplet, Quintuplets, make_quintuplets
from .treatment import sample_cf_treatment

__all__ = [
    "EchoSample", "GlyphDataset", "Quintuplet", "Quintuplets", "SEMISUPERVISED", "SUPERVISED",
    "apply_perturbation", "gen_echo_dataset", "gen_morpho_dataset", "ingest_video_dir", "make_quintuplets",
    "measure", "read_pgm", "render_echo", "sample_cf_treatment", "stack_videos", "write_pgm",
    "write_video_dir",
]
