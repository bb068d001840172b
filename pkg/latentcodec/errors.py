# Eryn Wells <eryn@erynwells.me>

'''
Exception hierarchy shared by every part of the codec.

Each error carries the process exit code the command line surface reports for
it and the name of the subsystem that raised it. Subsystems subclass one of the
categories below in their own modules.
'''


class CodecError(Exception):
    '''Base class of all errors raised deliberately by the codec.'''

    exit_code = 1
    module = 'internal'

    def __init__(self, message: str, *, module: str = ''):
        super().__init__(message)
        if module:
            self.module = module

    @property
    def message(self) -> str:
        '''The human readable part of the error'''
        return str(self.args[0]) if self.args else ''

    def diagnostic(self) -> str:
        '''A single line, machine parsable description of the error'''
        text = ' '.join(self.message.split())
        return f'error code={self.exit_code} module={self.module} message={text}'


class InputError(CodecError):
    '''Bad input: unreadable files, shape mismatches, out-of-range parameters'''
    exit_code = 2


class FormatError(CodecError):
    '''A file or byte sequence that does not follow its declared format'''
    exit_code = 3


class ModelMismatchError(FormatError):
    '''A bitstream produced with a different generator than the one supplied'''
    module = 'codec'


class NumericError(CodecError):
    '''A computation produced NaN or infinite values'''
    exit_code = 4


class ConfigurationError(InputError):
    '''A configuration value that is missing, malformed or out of range'''
    module = 'config'
