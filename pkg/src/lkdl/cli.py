#! /usr/bin/env python
import sys
import logging

from .arguments import parse_args
from .config import load_config
from .pipeline import LKDLPipeline, StageError

log = logging.getLogger(__name__)

def _dispatch( pipeline, args ):
    if args.command == 'preprocess':
        pipeline.run_preprocess()
    elif args.command == 'train':
        pipeline.run_train()
    elif args.command == 'classify':
        pipeline.run_classify()
    elif args.command == 'experiment':
        report = pipeline.run_experiment()
        if not report.rows:
            return 1
    elif args.command == 'sweep':
        pipeline.run_sweep( args.axis, args.values )
    elif args.command == 'approx-error':
        pipeline.approx_error( args.samplers, args.fractions, args.seeds, args.rank )
    elif args.command == 'lcksvd':
        pipeline.run_lcksvd()
    return 0

def main( argv=None ):
    args = parse_args( argv )
    try:
        config = load_config( args.config, args.overrides, seed=args.seed,
                              output=args.out, threads=args.threads, kernel=args.kernel )
    except (IOError, ValueError) as error:
        sys.stderr.write('lkdl: %s\n' % error)
        return 2
    pipeline = LKDLPipeline( config, debug=args.debug )
    try:
        return _dispatch( pipeline, args )
    except (StageError, ValueError, IOError) as error:
        log.error( str(error) )
        return 1

if __name__ == '__main__':
    sys.exit( main() )
