def print_args(args):
    print("\033[1m" + "Basic Config" + "\033[0m")
    print(f'  {"Step:":<20}{args.step:<20}{"Engine:":<20}{args.engine:<20}')
    print(f'  {"Seed:":<20}{args.seed:<20}{"Runs:":<20}{args.runs:<20}')
    print()

    print("\033[1m" + "Data Loader" + "\033[0m")
    print(f'  {"Data:":<20}{args.data:<20}{"Root Path:":<20}{args.root_path:<20}')
    print(f'  {"Gen Config:":<20}{str(args.gen_config):<20}{"Tweets:":<20}{str(args.tweets or "from config"):<20}')
    print()

    print("\033[1m" + "Pipeline" + "\033[0m")
    print(f'  {"Window (triples):":<20}{args.window:<20}{"Engines:":<20}{args.engines:<20}')
    print(f'  {"Backend:":<20}{str(args.backend or "step default"):<20}{"Rate (triples/s):":<20}{args.rate:<20}')
    print()

    if args.step != "step3":
        print("\033[1m" + "KB Access" + "\033[0m")
        print(f'  {"KB Mode:":<20}{args.kb_mode:<20}{"Reload per Window:":<20}{str(args.kb_reload):<20}')
        print()

    print("\033[1m" + "Output" + "\033[0m")
    print(f'  {"Report:":<20}{args.out:<20}{"Timeout (s):":<20}{args.timeout:<20}')
    print()
