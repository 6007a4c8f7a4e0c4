"""Produce itrank input files from pretrained transformer encoders."""

from .encode import Encoder, read_text_dataset
from .extract import (ExtractorJob, FimScope, OutputKind,
                      extract_embedded_dataset, extract_fsft_scores,
                      extract_sentence, extract_task_fim, extract_text_mean,
                      load_head, run_job, save_head, train_head)

__version__ = "0.1.0"
