from hodgedirac.cli.main import main

raise SystemExit(main())
