# Eryn Wells <eryn@erynwells.me>

'''
Signal pipelines: turning image and speech files into normalized patches shaped
for the generator, and turning generator outputs back into files.
'''

from .base import PipelineError, SignalPipeline, psnr, psnr_from_mse
from .image import ImageFormatError, ImagePipeline, ImagePipelineConfig
from .speech import SpeechPipeline, SpeechPipelineConfig
