// Shared types mirroring the annotation service's JSON payloads.

export type Category = 'process' | 'plan' | 'act' | 'error'

export const CATEGORIES: Category[] = ['process', 'plan', 'act', 'error']

export interface Flags {
  process: boolean
  plan: boolean
  act: boolean
  error: boolean
}

export const allFalse = (): Flags => ({
  process: false,
  plan: false,
  act: false,
  error: false,
})

export interface ActionSummary {
  step_id: string
  kind: string
  correct: boolean
}

export interface UtteranceView {
  utterance_id: string
  session_id: string
  index: number
  text: string
  segment_count: number
  prior_action: ActionSummary | null
  next_action: ActionSummary | null
  codes: Record<string, Flags>
  coded_by: string[]
}

export interface SessionSummary {
  session_id: string
  n_utterances: number
  n_coded: number
}

export interface CategoryReliability {
  kappa: number | null
  n_items: number
  observed_agreement: number
  expected_agreement: number
}

export interface ReliabilityReport {
  status: string
  coders: string[] | null
  n_items: number
  categories: Partial<Record<Category, CategoryReliability>>
}
